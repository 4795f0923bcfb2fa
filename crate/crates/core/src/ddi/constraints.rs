use std::collections::BTreeMap;

use crate::assembly::{restrict, Assembly};
use crate::error::{Error, Result};
use crate::forward::{Reactions, SnapshotConstraints};
use crate::mesh::Mesh;
use crate::phase_space::ModelMode;

/// Component carried by a resultant constraint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Component {
    U(usize),
    Chi(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DofClass {
    /// Known nodal force or double force.
    Free(f64),
    /// Member of resultant group `k`.
    Group(usize),
    Pinned,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultantGroup {
    pub set: String,
    pub component: Component,
    /// Required sum of internal forces over the group.
    pub target: f64,
    pub dofs: Vec<usize>,
}

/// Equilibrium constraints of one snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintPlan {
    pub mode: ModelMode,
    pub classes: Vec<DofClass>,
    pub groups: Vec<ResultantGroup>,
    /// Global DOF → multiplier unknown; group members share one unknown.
    pub map: Vec<Option<usize>>,
    pub nred: usize,
    group_index: Vec<usize>,
    loads: Vec<f64>,
}

impl ConstraintPlan {
    /// Reduced right-hand side `Tᵀ(f − div) + targets` for a given internal
    /// force vector `div`.
    pub fn residual_rhs(&self, div: &[f64]) -> Vec<f64> {
        let v: Vec<f64> = self.loads.iter().zip(div).map(|(f, d)| f - d).collect();
        let mut r = restrict(&self.map, self.nred, &v);
        for (g, &k) in self.groups.iter().zip(&self.group_index) {
            r[k] += g.target;
        }
        r
    }

    /// Free-DOF loads (zero on group and pinned DOFs).
    pub fn loads(&self) -> &[f64] {
        &self.loads
    }

    /// Largest violated constraint over the scale of the internal forces.
    pub fn relative_violation(&self, div: &[f64]) -> f64 {
        let r = self.residual_rhs(div);
        let scale = restrict(&self.map, self.nred, &div.iter().map(|v| v.abs()).collect::<Vec<_>>())
            .into_iter()
            .chain(self.groups.iter().map(|g| g.target.abs()))
            .fold(0.0, f64::max);
        let worst = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            worst
        } else {
            worst / scale
        }
    }
}

/// Classifies every DOF of the mesh for one snapshot.
///
/// Dirichlet DOFs on measured sets form one resultant group per set and
/// component, with target = recorded reaction + external load on the group.
/// Dirichlet DOFs on other sets are pinned. Everything else is free and
/// loaded by the body couple only.
pub fn build_constraints(
    mesh: &Mesh,
    asm: &Assembly,
    meta: &SnapshotConstraints,
    reactions: &Reactions,
    body_couple: f64,
) -> Result<ConstraintPlan> {
    let mode = asm.mode;
    let nd = mode.node_dofs();
    let n = asm.ndof;
    let loads = asm.body_couple_load(body_couple);
    let mut owner: Vec<Option<(String, Component)>> = vec![None; n];
    let mut claim = |set: &str, comp: Component, dof: usize| -> Result<()> {
        match &owner[dof] {
            Some((s, c)) if s != set || *c != comp => {
                let measured = |x: &str| meta.measured_sets.iter().any(|m| m == x);
                if measured(s) || measured(set) {
                    return Err(Error::Constraint(format!(
                        "DOF {dof} belongs to sets '{s}' and '{set}'"
                    )));
                }
            }
            Some(_) => {}
            None => owner[dof] = Some((set.to_string(), comp)),
        }
        Ok(())
    };
    for d in &meta.dirichlet_u {
        if d.direction > 1 {
            return Err(Error::Program(format!("direction {} out of range", d.direction)));
        }
        for &a in mesh.node_set(&d.set)? {
            claim(&d.set, Component::U(d.direction), a * nd + d.direction)?;
        }
    }
    for d in &meta.dirichlet_chi {
        if d.component >= mode.chi_len() {
            return Err(Error::Program(format!("χ component {} out of range for {mode}", d.component)));
        }
        for &a in mesh.node_set(&d.set)? {
            claim(&d.set, Component::Chi(d.component), a * nd + 2 + d.component)?;
        }
    }
    for s in &meta.measured_sets {
        mesh.node_set(s)?;
        if !reactions.contains_key(s) {
            return Err(Error::Constraint(format!("measured set '{s}' has no recorded resultant")));
        }
    }

    let mut groups: Vec<ResultantGroup> = Vec::new();
    let mut key_to_group: BTreeMap<(String, Component), usize> = BTreeMap::new();
    let mut classes = Vec::with_capacity(n);
    for (i, o) in owner.iter().enumerate() {
        let class = match o {
            None => DofClass::Free(loads[i]),
            Some((s, c)) if meta.measured_sets.contains(s) => {
                let k = *key_to_group.entry((s.clone(), *c)).or_insert_with(|| {
                    let rec = &reactions[s];
                    let target = match *c {
                        Component::U(d) => rec.f[d],
                        Component::Chi(k) => match mode {
                            ModelMode::Micropolar0 => rec.couple,
                            ModelMode::Full1 => rec.chi.get(k).copied().unwrap_or(f64::NAN),
                        },
                    };
                    groups.push(ResultantGroup {
                        set: s.clone(),
                        component: *c,
                        target,
                        dofs: Vec::new(),
                    });
                    groups.len() - 1
                });
                groups[k].dofs.push(i);
                groups[k].target += loads[i];
                DofClass::Group(k)
            }
            Some(_) => DofClass::Pinned,
        };
        classes.push(class);
    }
    if let Some(g) = groups.iter().find(|g| !g.target.is_finite()) {
        return Err(Error::Constraint(format!(
            "measured set '{}' lacks a microdeformation reaction for {:?}",
            g.set, g.component
        )));
    }

    let mut map = vec![None; n];
    let mut group_index = vec![usize::MAX; groups.len()];
    let mut nred = 0;
    for (i, c) in classes.iter().enumerate() {
        match *c {
            DofClass::Free(_) => {
                map[i] = Some(nred);
                nred += 1;
            }
            DofClass::Group(k) => {
                if group_index[k] == usize::MAX {
                    group_index[k] = nred;
                    nred += 1;
                }
                map[i] = Some(group_index[k]);
            }
            DofClass::Pinned => {}
        }
    }
    let loads = classes
        .iter()
        .map(|c| if let DofClass::Free(f) = c { *f } else { 0.0 })
        .collect();
    Ok(ConstraintPlan {
        mode,
        classes,
        groups,
        map,
        nred,
        group_index,
        loads,
    })
}
