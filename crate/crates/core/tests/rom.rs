mod common;

use thermocloak::metrics::{steady_field_errors, transient_field_errors};
use thermocloak::rom::{
    build_bases, load_archive, project, save_archive, solve_rom_steady, solve_rom_transient, BasisBuilder, PodBasis,
    SnapshotBlock,
};
use thermocloak::scenarios::{generate_snapshots, lhs_sample, Provenance, SnapshotSettings};
use thermocloak::{solve_steady, solve_transient_ocp, ControlWeights, ParamBox, ScenarioParams, SolverOptions, TimeGrid};

fn mu() -> ScenarioParams {
    ScenarioParams::new(2.5, 8e3, 80.0)
}

#[test]
fn identity_basis_reproduces_the_full_model() {
    let pb = common::coarse_problem();
    let ops = &pb.ops;
    let w = ControlWeights::default();
    let rom = project(ops, &PodBasis::identity(ops)).unwrap();
    let full = solve_steady(ops, &mu(), &w).unwrap();
    let reduced = rom.lift_steady(&solve_rom_steady(&rom, &mu(), &w).unwrap());
    assert!(steady_field_errors(ops, &reduced, &full).unwrap().max() < 1e-9);

    let grid = TimeGrid::new(2.0, 20).unwrap();
    let opts = SolverOptions::conjugate(1e-13, 1000);
    let full = solve_transient_ocp(ops, &mu(), &w, &grid, &opts).unwrap();
    let reduced = rom.lift_trajectory(&solve_rom_transient(&rom, &mu(), &w, &grid, &opts).unwrap());
    let e = transient_field_errors(ops, &reduced, &full).unwrap();
    assert!(e.max() < 1e-6, "{e:?}");
}

#[test]
fn training_point_is_reproduced() {
    // a basis trained on one parameter contains that solution exactly
    let pb = common::coarse_problem();
    let ops = &pb.ops;
    let w = ControlWeights::default();
    let s = solve_steady(ops, &mu(), &w).unwrap();
    let basis = build_bases([(pb.mesh_hash(), SnapshotBlock::from_steady(&s))], 0.0).unwrap();
    assert_eq!(basis.dims(), (1, 2, 1));
    let rom = project(ops, &basis).unwrap();
    let r = rom.lift_steady(&solve_rom_steady(&rom, &mu(), &w).unwrap());
    assert!(steady_field_errors(ops, &r, &s).unwrap().max() < 1e-8);
}

#[test]
fn galerkin_blocks_match_projection() {
    let pb = common::coarse_problem();
    let ops = &pb.ops;
    let train = lhs_sample(&ParamBox::default(), 4, 3).unwrap();
    let w = ControlWeights::default();
    let blocks = train.iter().map(|p| (pb.mesh_hash(), SnapshotBlock::from_steady(&solve_steady(ops, p, &w).unwrap())));
    let basis = build_bases(blocks, 1e-12).unwrap();
    let rom = project(ops, &basis).unwrap();
    let v = &basis.qp;
    let direct = v.galerkin(&ops.diffusion_free, v);
    assert!(direct.max_abs_diff(&rom.diffusion_q) < 1e-10 * direct.max_abs());
    let b = v.galerkin(&ops.control_coupling, &basis.u);
    assert!(b.max_abs_diff(&rom.coupling) < 1e-10 * b.max_abs().max(1e-300));
}

#[test]
fn basis_builder_rejects_mixed_meshes() {
    let pb = common::coarse_problem();
    let s = solve_steady(&pb.ops, &mu(), &ControlWeights::default()).unwrap();
    let mut b = BasisBuilder::new(1e-8).unwrap();
    b.add("a", SnapshotBlock::from_steady(&s)).unwrap();
    assert!(b.add("b", SnapshotBlock::from_steady(&s)).is_err());
    assert!(BasisBuilder::new(1.5).is_err());
    assert!(BasisBuilder::new(1e-8).unwrap().finish().is_err());
}

#[test]
fn archive_round_trip_and_checksums() {
    let pb = common::coarse_problem();
    let ops = &pb.ops;
    let w = ControlWeights::default();
    let train = lhs_sample(&ParamBox::default(), 3, 5).unwrap();
    let blocks = train.iter().map(|p| (pb.mesh_hash(), SnapshotBlock::from_steady(&solve_steady(ops, p, &w).unwrap())));
    let rom = project(ops, &build_bases(blocks, 1e-10).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let meta = vec![("regime".to_string(), "steady".to_string())];
    save_archive(dir.path(), &rom, (ops.n_z(), ops.n_q(), ops.n_u()), &pb.mesh_hash(), &meta).unwrap();
    let (back, m) = load_archive(dir.path(), Some(&pb.mesh_hash())).unwrap();
    assert_eq!(m.metadata("regime"), Some("steady"));
    let a = solve_rom_steady(&rom, &mu(), &w).unwrap();
    let b = solve_rom_steady(&back, &mu(), &w).unwrap();
    assert!(common::max_rel(&b.u, &a.u) < 1e-13);

    assert!(load_archive(dir.path(), Some("other")).is_err());
    let f = dir.path().join("coupling.txt");
    let text = std::fs::read_to_string(&f).unwrap();
    std::fs::write(&f, text.replacen('1', "2", 1)).unwrap();
    let e = load_archive(dir.path(), None).unwrap_err().to_string();
    assert!(e.contains("coupling"), "{e}");

    let empty = tempfile::tempdir().unwrap();
    let e = load_archive(empty.path(), None).unwrap_err().to_string();
    assert!(e.contains("offline"), "{e}");
}

#[test]
fn parallel_snapshots_match_serial() {
    let pb = common::coarse_problem();
    let train = lhs_sample(&ParamBox::default(), 4, 9).unwrap();
    let prov = Provenance { seed: 9, config_hash: "x".into(), mesh_hash: pb.mesh_hash() };
    let w = ControlWeights::default();
    let grid = TimeGrid::new(1.0, 10).unwrap();
    let par = SnapshotSettings::transient(w, grid, SolverOptions::default());
    let ser = SnapshotSettings { parallel: false, ..par };
    let a = generate_snapshots(&pb.ops, &train, &par, prov.clone()).unwrap();
    let b = generate_snapshots(&pb.ops, &train, &ser, prov).unwrap();
    for (x, y) in a.records.iter().zip(&b.records) {
        assert_eq!(x.index, y.index);
        let (tx, ty) = (x.trajectory.as_ref().unwrap(), y.trajectory.as_ref().unwrap());
        assert_eq!(tx.u, ty.u);
        assert_eq!(tx.q, ty.q);
    }
}
