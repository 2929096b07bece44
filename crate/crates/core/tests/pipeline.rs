use rapopt::generators::{gen_compressed_sensing, gen_scad_ls, GenSpec};
use rapopt::io::{load_instance, write_compressed_sensing, write_scad_ls, Instance};
use rapopt::metrics::{read_csv, MonitorOptions, StopReason};
use rapopt::rapdual::{rapdual_run, RapDualConfig};
use rapopt::rapgrad::{rapgrad_run, RapGradConfig};

#[test]
fn scad_ls_generate_write_load_run_csv() {
    let dir = tempfile::tempdir().unwrap();
    let inst = gen_scad_ls(&GenSpec::scad_ls(25, 6, 3)).unwrap();
    let (path, desc) = write_scad_ls(&inst, dir.path()).unwrap();
    let loaded = load_instance(&path).unwrap();
    assert_eq!(loaded.spec(), &inst.spec);
    assert_eq!(loaded.ground_truth(), inst.ground_truth.as_slice());
    let Instance::FiniteSum { problem, .. } = loaded else { panic!("expected a finite-sum instance") };
    assert_eq!(problem.num_components(), 25);

    let cfg = RapGradConfig {
        k: 4,
        s_factor: 0.1,
        seed: 1,
        monitor: MonitorOptions { record_every: 0.5, ..Default::default() },
        ..Default::default()
    };
    let a = rapgrad_run(&problem, &cfg).unwrap();
    let b = rapgrad_run(&inst.problem, &cfg).unwrap();
    assert_eq!(a.x, b.x, "loaded and generated instances must behave identically");

    let csv_path = dir.path().join("run.csv");
    a.record.write_csv(std::fs::File::create(&csv_path).unwrap()).unwrap();
    let rows = read_csv(std::fs::File::open(&csv_path).unwrap()).unwrap();
    assert_eq!(rows.len(), a.record.rows.len());
    for (r, s) in rows.iter().zip(&a.record.rows) {
        assert_eq!(r.pass, s.pass);
        assert_eq!(r.objective, s.objective);
        assert_eq!(r.grad_norm_sq, s.grad_norm_sq);
    }
    assert_eq!(desc.redrawn_columns, 0);
}

#[test]
fn compressed_sensing_generate_write_load_run() {
    let dir = tempfile::tempdir().unwrap();
    let inst = gen_compressed_sensing(&GenSpec::compressed_sensing(6, 8, 4)).unwrap();
    let (path, desc) = write_compressed_sensing(&inst, dir.path()).unwrap();
    assert_eq!(desc.redrawn_columns, inst.redrawn_columns);
    let Instance::MultiBlock { problem, .. } = load_instance(&path).unwrap() else {
        panic!("expected a multi-block instance")
    };
    let cfg = RapDualConfig {
        k: 3,
        s_factor: 0.1,
        seed: 2,
        monitor: MonitorOptions { max_passes: 1e4, ..Default::default() },
        ..Default::default()
    };
    let out = rapdual_run(&problem, &cfg).unwrap();
    let reference = rapdual_run(&inst.problem, &cfg).unwrap();
    assert_eq!(out.x, reference.x);
    assert_eq!(out.xm, reference.xm);
    assert_eq!(out.record.stop_reason, StopReason::Completed);
    assert!(out.record.final_row().unwrap().feasibility_sq.is_some());
}
