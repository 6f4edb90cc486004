use crate::error::Result;
use crate::fem::{assemble_operators, FemOperators};
use crate::mesh::{build_restriction, generate_layout, LayoutSpec, Mesh, SourceDisc};

/// Meshes and assembled operators of one layout.
#[derive(Debug, Clone)]
pub struct Problem {
    pub unperturbed: Mesh,
    pub ocp: Mesh,
    pub ops: FemOperators,
}

impl Problem {
    pub fn from_layout(spec: &LayoutSpec) -> Result<Problem> {
        let meshes = generate_layout(spec)?;
        Problem::from_meshes(meshes.unperturbed, meshes.ocp, &spec.source)
    }

    pub fn from_meshes(unperturbed: Mesh, ocp: Mesh, source: &SourceDisc) -> Result<Problem> {
        let restriction = build_restriction(&unperturbed, &ocp)?;
        let ops = assemble_operators(&unperturbed, &ocp, &restriction, source)?;
        Ok(Problem { unperturbed, ocp, ops })
    }

    /// Hash identifying the mesh pair, used to tie snapshots and archives to
    /// the discretization that produced them.
    pub fn mesh_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.unperturbed.content_hash().as_bytes());
        h.update(self.ocp.content_hash().as_bytes());
        h.update(
            self.ops
                .source_shape
                .iter()
                .flat_map(|v| v.to_bits().to_le_bytes())
                .collect::<Vec<u8>>(),
        );
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
