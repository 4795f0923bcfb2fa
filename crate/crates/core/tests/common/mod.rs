#![allow(dead_code)]

use mmddi::fem::element_operators;
use mmddi::forward::{DirichletU, Snapshot};
use mmddi::phase_space::{apply_metric, Block, Direction};
use mmddi::{BoundaryProgram, Mesh, MetricParams, ModelMode};
use nalgebra::{DMatrix, DVector};

fn set_u(set: &str, direction: usize, value: f64) -> DirichletU {
    DirichletU {
        set: set.into(),
        direction,
        value,
    }
}

/// Uniaxial bar: bottom `u2 = 0`, left `u1 = 0`, top `u2 = ubar` measured,
/// right edge traction free.
pub fn bar_program(ubar: f64, increments: usize) -> BoundaryProgram {
    BoundaryProgram {
        dirichlet_u: vec![set_u("bottom", 1, 0.0), set_u("left", 0, 0.0), set_u("top", 1, ubar)],
        dirichlet_chi: vec![],
        body_couple: 0.0,
        increments,
        measured_sets: vec!["top".into()],
    }
}

/// Slot pattern of each independent stress component.
fn components(mode: ModelMode) -> Vec<Vec<usize>> {
    let mut c = vec![vec![0], vec![3], vec![1, 2]];
    match mode {
        ModelMode::Micropolar0 => c.push(vec![4]),
        ModelMode::Full1 => c.extend((4..16).map(|s| vec![s])),
    }
    c
}

fn op_inverse(p: &MetricParams, mode: ModelMode, s: &[f64; 16]) -> [f64; 16] {
    let mut out = [0.0; 16];
    let ng = mode.gam_len();
    let nz = mode.zet_len();
    let inv = |b, x: &[f64]| apply_metric(b, Direction::Inverse, p, x, mode).unwrap();
    out[..4].copy_from_slice(&inv(Block::C, &s[..4]));
    out[4..4 + ng].copy_from_slice(&inv(Block::D, &s[4..4 + ng]));
    if nz > 0 {
        out[8..8 + nz].copy_from_slice(&inv(Block::A, &s[8..8 + nz]));
    }
    out
}

/// Dense saddle-point solution of the single-element identification with
/// one data state: minimize `Σ_g w_g ½ (s_g − s̄)ᵀ Op⁻¹ (s_g − s̄)` over the
/// four point stresses and `s̄`, subject to every free-DOF balance and the
/// top `u2` resultant of [`bar_program`]. Returns the point stresses.
pub fn single_element_kkt(mesh: &Mesh, mode: ModelMode, metric: &MetricParams, snap: &Snapshot) -> Vec<[f64; 16]> {
    assert_eq!(mesh.n_elems(), 1);
    let ops = element_operators(mesh, 0, mode).unwrap();
    let comps = components(mode);
    let m = comps.len();
    let embed = |c: &[f64]| {
        let mut s = [0.0; 16];
        for (k, slots) in comps.iter().enumerate() {
            for &i in slots {
                s[i] = c[k];
            }
        }
        s
    };
    let nd = mode.node_dofs();
    let nodes = mesh.elems[0];
    let in_set = |name: &str, a: usize| mesh.node_set(name).unwrap().contains(&nodes[a]);

    // constraint rows over the 4m point-stress unknowns
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut top_u2 = vec![0.0; 4 * m];
    for a in 0..4 {
        for d in 0..nd {
            let pinned = (d == 1 && in_set("bottom", a)) || (d == 0 && in_set("left", a));
            let group = d == 1 && in_set("top", a);
            if pinned {
                continue;
            }
            let mut row = vec![0.0; 4 * m];
            for g in 0..4 {
                let b = ops.b_columns(g)[a * nd + d];
                let w = ops.points[g].w;
                for k in 0..m {
                    let unit: Vec<f64> = (0..m).map(|j| if j == k { 1.0 } else { 0.0 }).collect();
                    let s = embed(&unit);
                    row[g * m + k] = w * b.iter().zip(&s).map(|(x, y)| x * y).sum::<f64>();
                }
            }
            if group {
                top_u2.iter_mut().zip(&row).for_each(|(t, r)| *t += r);
            } else {
                rows.push((row, 0.0));
            }
        }
    }
    rows.push((top_u2, snap.reactions["top"].f[1]));

    // quadratic form over [s_1..s_4, s̄]
    let nv = 5 * m;
    let nc = rows.len();
    let mut kkt = DMatrix::<f64>::zeros(nv + nc, nv + nc);
    let mut q0 = DMatrix::<f64>::zeros(m, m);
    for j in 0..m {
        let unit: Vec<f64> = (0..m).map(|i| if i == j { 1.0 } else { 0.0 }).collect();
        let e = op_inverse(metric, mode, &embed(&unit));
        for i in 0..m {
            let unit: Vec<f64> = (0..m).map(|k| if k == i { 1.0 } else { 0.0 }).collect();
            q0[(i, j)] = embed(&unit).iter().zip(&e).map(|(x, y)| x * y).sum();
        }
    }
    for g in 0..4 {
        let w = ops.points[g].w;
        for i in 0..m {
            for j in 0..m {
                let v = w * q0[(i, j)];
                kkt[(g * m + i, g * m + j)] += v;
                kkt[(4 * m + i, 4 * m + j)] += v;
                kkt[(g * m + i, 4 * m + j)] -= v;
                kkt[(4 * m + i, g * m + j)] -= v;
            }
        }
    }
    let mut rhs = DVector::<f64>::zeros(nv + nc);
    for (r, (row, t)) in rows.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            kkt[(nv + r, c)] = *v;
            kkt[(c, nv + r)] = *v;
        }
        rhs[nv + r] = *t;
    }
    let x = kkt.full_piv_lu().solve(&rhs).expect("KKT system is singular");
    (0..4).map(|g| embed(&x.as_slice()[g * m..(g + 1) * m])).collect()
}

/// One `w × h` element with the four edge sets.
pub fn single_element_mesh(w: f64, h: f64) -> Mesh {
    let sets = [("bottom", vec![0, 1]), ("right", vec![1, 2]), ("top", vec![2, 3]), ("left", vec![0, 3])]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    Mesh::new(vec![[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]], vec![[0, 1, 2, 3]], sets).unwrap()
}
