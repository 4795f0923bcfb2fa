mod common;

use mmddi::ddi::{identify, IdentifyOptions};
use mmddi::forward::generate_snapshots;
use mmddi::mesh::generate_mesh;
use mmddi::phase_space::GeneralizedState;
use mmddi::{BoundaryProgram, Error, GeometrySpec, MetricParams, ModelMode, NodalFields};

fn metric() -> MetricParams {
    MetricParams::new(2.0, 1.0, 1.5, 0.8, 0.5)
}

#[test]
fn single_element_matches_dense_kkt() {
    let mesh = common::single_element_mesh(2.0, 3.0);
    assert_eq!(mesh.n_elems(), 1);
    let truth = MetricParams::new(5.0, 3.0, 2.0, 4.0, 0.7);
    for mode in [ModelMode::Micropolar0, ModelMode::Full1] {
        let set = generate_snapshots(&mesh, &truth, mode, &common::bar_program(0.03, 1)).unwrap();
        let res = identify(&mesh, &set, &metric(), mode, &IdentifyOptions::new(1, 7)).unwrap();
        assert!(res.converged);
        let oracle = common::single_element_kkt(&mesh, mode, &metric(), &set.snapshots[0]);
        let f = set.snapshots[0].reactions["top"].f[1];
        let scale = f.abs() / 2.0;
        for (s, o) in res.stresses[0].iter().zip(&oracle) {
            for c in 0..16 {
                assert!((s[c] - o[c]).abs() < 1e-9 * scale, "{mode} slot {c}: {} vs {}", s[c], o[c]);
            }
            assert!((s[3] - f / 2.0).abs() < 1e-9 * scale);
        }
    }
}

#[test]
fn zero_snapshots_give_zero_data() {
    let mesh = generate_mesh(&GeometrySpec::rectangle(3.0, 2.0, 0.5)).unwrap();
    let mut set = generate_snapshots(&mesh, &metric(), ModelMode::Full1, &BoundaryProgram::tension(0.0, 3)).unwrap();
    for s in &mut set.snapshots {
        s.fields = NodalFields::zeros(ModelMode::Full1, mesh.n_nodes());
    }
    let res = identify(&mesh, &set, &metric(), ModelMode::Full1, &IdentifyOptions::new(4, 1)).unwrap();
    assert!(res.converged);
    assert!(res.dataset.states.iter().all(|z| z.data().iter().all(|&v| v == 0.0)));
    assert!(res.stresses.iter().flatten().all(|s| s.iter().all(|&v| v == 0.0)));
}

#[test]
fn rejects_too_many_states() {
    let mesh = generate_mesh(&GeometrySpec::rectangle(1.0, 1.0, 1.0)).unwrap();
    let set = generate_snapshots(&mesh, &metric(), ModelMode::Full1, &BoundaryProgram::tension(0.1, 1)).unwrap();
    let err = identify(&mesh, &set, &metric(), ModelMode::Full1, &IdentifyOptions::new(5, 0)).unwrap_err();
    assert!(matches!(err, Error::InvalidInput(ref m) if m.contains("nstates")));
}

fn check_invariants(mode: ModelMode, program: BoundaryProgram, truth: MetricParams) {
    let mesh = generate_mesh(&GeometrySpec::rectangle(4.0, 4.0, 0.5)).unwrap();
    let set = generate_snapshots(&mesh, &truth, mode, &program).unwrap();
    for polish in [false, true] {
        let mut opts = IdentifyOptions::new(12, 42);
        opts.polish = polish;
        check_run(&mesh, &set, mode, &opts);
    }
}

fn check_run(mesh: &mmddi::Mesh, set: &mmddi::SnapshotSet, mode: ModelMode, opts: &IdentifyOptions) {
    let res = identify(mesh, set, &metric(), mode, opts).unwrap();
    assert!(res.converged, "{mode}: not converged");
    assert!(res.is_monotone(1e-12), "{mode}: {:?}", res.history);
    if opts.polish {
        assert!(res.pseudo_strain < 1e-8, "{mode}: {}", res.pseudo_strain);
    } else {
        assert!(res.pseudo_strain.is_finite());
    }
    assert!(res.max_violation < 1e-9, "{mode}: {}", res.max_violation);

    // centroids are the weighted means of their clusters
    let states = res.states();
    let w = mmddi::assembly::Assembly::new(mesh, mode).unwrap().weights();
    let npts = w.len();
    for (i, zbar) in res.dataset.states.iter().enumerate() {
        let mut acc = [0.0; 32];
        let mut mass = 0.0;
        for (g, z) in states.iter().enumerate() {
            if res.pointers[g] == i {
                mass += w[g % npts];
                acc.iter_mut().zip(z.data()).for_each(|(a, v)| *a += w[g % npts] * v);
            }
        }
        let mean = acc.map(|v| v / mass);
        let scale = mean.iter().fold(1e-30f64, |m, v| m.max(v.abs()));
        for (a, b) in mean.iter().zip(zbar.data()) {
            assert!((a - b).abs() < 1e-8 * scale);
        }
    }

    let again = identify(mesh, set, &metric(), mode, opts).unwrap();
    assert_eq!(again.pointers, res.pointers);
    let bits = |s: &[GeneralizedState]| -> Vec<u64> { s.iter().flat_map(|z| z.data().map(f64::to_bits)).collect() };
    assert_eq!(bits(&again.dataset.states), bits(&res.dataset.states));
}

#[test]
fn invariants_full1() {
    check_invariants(
        ModelMode::Full1,
        BoundaryProgram::tension(0.02, 4),
        MetricParams::new(5.0, 3.0, 2.0, 4.0, 0.7),
    );
}

#[test]
fn invariants_micropolar_with_couple() {
    check_invariants(
        ModelMode::Micropolar0,
        BoundaryProgram::clamped_tension(0.02, -0.05, 4),
        MetricParams::new(5.0, 3.0, 0.0, 4.0, 0.0),
    );
}
