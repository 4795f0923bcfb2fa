//! Structured bilinear-quadrilateral meshes with named node sets.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{q4_shape, GAUSS_POINTS};

/// Circular hole `|x − center| < radius`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hole {
    pub center: [f64; 2],
    pub radius: f64,
}

/// Domain shapes. Curved features are resolved by deleting elements whose
/// centroid falls inside them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Geometry {
    Rectangle { width: f64, height: f64 },
    /// Square plate of side `side` with circular holes.
    PlateWithHoles { side: f64, holes: Vec<Hole> },
    /// Square of side `side` without its upper-right quadrant; `fillet`
    /// rounds the re-entrant corner.
    LShape { side: f64, fillet: f64 },
    /// Square of side `side` with semicircular notches of radius `radius`
    /// centred on the left and right edges at mid-height.
    DoubleNotch { side: f64, radius: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    pub geometry: Geometry,
    /// Target element size (mm).
    pub h: f64,
}

impl GeometrySpec {
    pub fn rectangle(width: f64, height: f64, h: f64) -> Self {
        Self {
            geometry: Geometry::Rectangle { width, height },
            h,
        }
    }

    pub fn plate_with_holes(side: f64, h: f64) -> Self {
        let holes = [(0.045, [0.28, 0.25]), (0.12, [0.72, 0.42]), (0.075, [0.22, 0.75])]
            .into_iter()
            .map(|(r, c)| Hole {
                center: [c[0] * side, c[1] * side],
                radius: r * side,
            })
            .collect();
        Self {
            geometry: Geometry::PlateWithHoles { side, holes },
            h,
        }
    }

    pub fn lshape(side: f64, h: f64) -> Self {
        Self {
            geometry: Geometry::LShape { side, fillet: 0.75 },
            h,
        }
    }

    pub fn double_notch(side: f64, radius: f64, h: f64) -> Self {
        Self {
            geometry: Geometry::DoubleNotch { side, radius },
            h,
        }
    }

    /// Bounding box `(width, height)`.
    pub fn extent(&self) -> (f64, f64) {
        match &self.geometry {
            Geometry::Rectangle { width, height } => (*width, *height),
            Geometry::PlateWithHoles { side, .. }
            | Geometry::LShape { side, .. }
            | Geometry::DoubleNotch { side, .. } => (*side, *side),
        }
    }

    /// True if the point lies in the material region.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let (w, hgt) = self.extent();
        if p[0] < 0.0 || p[1] < 0.0 || p[0] > w || p[1] > hgt {
            return false;
        }
        let dist = |c: [f64; 2]| ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt();
        match &self.geometry {
            Geometry::Rectangle { .. } => true,
            Geometry::PlateWithHoles { holes, .. } => holes.iter().all(|h| dist(h.center) >= h.radius),
            Geometry::LShape { side, fillet } => {
                let c = 0.5 * side;
                if p[0] <= c || p[1] <= c {
                    return true;
                }
                // fillet material in the corner square outside the rounding circle
                *fillet > 0.0
                    && p[0] < c + fillet
                    && p[1] < c + fillet
                    && dist([c + fillet, c + fillet]) > *fillet
            }
            Geometry::DoubleNotch { side, radius } => {
                dist([0.0, 0.5 * side]) >= *radius && dist([*side, 0.5 * side]) >= *radius
            }
        }
    }

    fn check(&self) -> Result<()> {
        let h = self.h;
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::Geometry(format!("element size must be positive, got {h}")));
        }
        let (w, hgt) = self.extent();
        if !(w > 0.0 && hgt > 0.0 && w.is_finite() && hgt.is_finite()) {
            return Err(Error::Geometry(format!("non-positive dimensions {w} x {hgt}")));
        }
        let mut features = vec![("width", w), ("height", hgt)];
        match &self.geometry {
            Geometry::Rectangle { .. } => {}
            Geometry::PlateWithHoles { holes, .. } => {
                for hole in holes {
                    if hole.radius <= 0.0 {
                        return Err(Error::Geometry("hole radius must be positive".into()));
                    }
                    features.push(("hole diameter", 2.0 * hole.radius));
                }
            }
            Geometry::LShape { side, fillet } => {
                if *fillet < 0.0 || *fillet >= 0.5 * side {
                    return Err(Error::Geometry(format!("fillet radius {fillet} out of range")));
                }
                features.push(("arm width", 0.5 * side));
                if *fillet > 0.0 {
                    features.push(("fillet diameter", 2.0 * fillet));
                }
            }
            Geometry::DoubleNotch { side, radius } => {
                if *radius <= 0.0 || *radius >= 0.5 * side {
                    return Err(Error::Geometry(format!("notch radius {radius} out of range")));
                }
                features.push(("notch diameter", 2.0 * radius));
                features.push(("ligament", side - 2.0 * radius));
            }
        }
        for (name, size) in features {
            if size < h {
                return Err(Error::Geometry(format!(
                    "{name} {size} is smaller than the element size {h}"
                )));
            }
        }
        Ok(())
    }
}

/// Bilinear quadrilateral mesh. Elements list their nodes counter-clockwise.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<[f64; 2]>,
    pub elems: Vec<[usize; 4]>,
    pub node_sets: BTreeMap<String, Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct MeshFile {
    nodes: Vec<[f64; 2]>,
    elems: Vec<[usize; 4]>,
    node_sets: BTreeMap<String, Vec<usize>>,
    #[serde(default = "mm")]
    units: String,
}

fn mm() -> String {
    "mm".into()
}

impl Mesh {
    /// Validates and wraps raw mesh data.
    pub fn new(
        nodes: Vec<[f64; 2]>,
        elems: Vec<[usize; 4]>,
        node_sets: BTreeMap<String, Vec<usize>>,
    ) -> Result<Self> {
        let mesh = Self {
            nodes,
            elems,
            node_sets,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elems(&self) -> usize {
        self.elems.len()
    }

    /// Material points (four per element).
    pub fn n_points(&self) -> usize {
        4 * self.elems.len()
    }

    pub fn node_set(&self, name: &str) -> Result<&[usize]> {
        self.node_sets
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::InvalidInput(format!("unknown node set '{name}'")))
    }

    pub fn elem_coords(&self, e: usize) -> [[f64; 2]; 4] {
        self.elems[e].map(|a| self.nodes[a])
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        if self.nodes.iter().any(|p| !(p[0].is_finite() && p[1].is_finite())) {
            return Err(Error::Format("non-finite node coordinate".into()));
        }
        for (e, el) in self.elems.iter().enumerate() {
            if let Some(&a) = el.iter().find(|&&a| a >= n) {
                return Err(Error::IndexOutOfRange(format!("element {e} references node {a}")));
            }
            let x = self.elem_coords(e);
            for (g, &(xi, eta)) in GAUSS_POINTS.iter().enumerate() {
                let (_, dn) = q4_shape(xi, eta);
                let mut j = [[0.0; 2]; 2];
                for a in 0..4 {
                    for r in 0..2 {
                        for c in 0..2 {
                            j[r][c] += x[a][r] * dn[a][c];
                        }
                    }
                }
                if j[0][0] * j[1][1] - j[0][1] * j[1][0] <= 0.0 {
                    return Err(Error::InvertedElement { elem: e, point: g });
                }
            }
        }
        for (name, ids) in &self.node_sets {
            if let Some(&a) = ids.iter().find(|&&a| a >= n) {
                return Err(Error::IndexOutOfRange(format!("node set '{name}' references node {a}")));
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| self.nodes[a][0].total_cmp(&self.nodes[b][0]));
        for (k, &a) in order.iter().enumerate() {
            for &b in &order[k + 1..] {
                if self.nodes[b][0] - self.nodes[a][0] > 1e-9 {
                    break;
                }
                if (self.nodes[b][1] - self.nodes[a][1]).abs() <= 1e-9 {
                    return Err(Error::Format(format!("duplicate nodes {a} and {b}")));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = MeshFile {
            nodes: self.nodes.clone(),
            elems: self.elems.clone(),
            node_sets: self.node_sets.clone(),
            units: mm(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MeshFile = serde_json::from_str(text)?;
        Self::new(file.nodes, file.elems, file.node_sets)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        self.validate()?;
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Total integration area `Σ_e Σ_g |J|`.
    pub fn area(&self) -> f64 {
        (0..self.n_elems())
            .map(|e| {
                let x = self.elem_coords(e);
                GAUSS_POINTS
                    .iter()
                    .map(|&(xi, eta)| {
                        let (_, dn) = q4_shape(xi, eta);
                        let mut j = [[0.0; 2]; 2];
                        for a in 0..4 {
                            for r in 0..2 {
                                for c in 0..2 {
                                    j[r][c] += x[a][r] * dn[a][c];
                                }
                            }
                        }
                        j[0][0] * j[1][1] - j[0][1] * j[1][0]
                    })
                    .sum::<f64>()
            })
            .sum()
    }
}

/// Grid divisions along one side.
fn divisions(length: f64, h: f64, even: bool) -> usize {
    let mut n = ((length / h) - 1e-9).ceil().max(1.0) as usize;
    if even && n % 2 == 1 {
        n += 1;
    }
    n
}

/// Structured grid over the bounding box, minus elements whose centroid
/// lies outside the material region.
pub fn generate_mesh(spec: &GeometrySpec) -> Result<Mesh> {
    spec.check()?;
    let (w, hgt) = spec.extent();
    let symmetric = matches!(spec.geometry, Geometry::LShape { .. } | Geometry::DoubleNotch { .. });
    let nx = divisions(w, spec.h, symmetric);
    let ny = divisions(hgt, spec.h, symmetric);
    let dx = w / nx as f64;
    let dy = hgt / ny as f64;
    let grid = |i: usize, j: usize| j * (nx + 1) + i;

    let mut elems = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let centroid = [(i as f64 + 0.5) * dx, (j as f64 + 0.5) * dy];
            if spec.contains(centroid) {
                elems.push([grid(i, j), grid(i + 1, j), grid(i + 1, j + 1), grid(i, j + 1)]);
            }
        }
    }
    if elems.is_empty() {
        return Err(Error::Geometry("no elements left after feature removal".into()));
    }

    let mut used = vec![false; (nx + 1) * (ny + 1)];
    elems.iter().flatten().for_each(|&a| used[a] = true);
    let mut renumber = vec![usize::MAX; used.len()];
    let mut nodes = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            let g = grid(i, j);
            if used[g] {
                renumber[g] = nodes.len();
                // endpoints are set exactly so boundary coordinates are clean
                let x = if i == nx { w } else { i as f64 * dx };
                let y = if j == ny { hgt } else { j as f64 * dy };
                nodes.push([x, y]);
            }
        }
    }
    for el in elems.iter_mut() {
        for a in el.iter_mut() {
            *a = renumber[*a];
        }
    }

    let tol = spec.h / 10.0;
    let select = |f: &dyn Fn(&[f64; 2]) -> bool| -> Vec<usize> {
        nodes.iter().enumerate().filter(|(_, p)| f(p)).map(|(a, _)| a).collect()
    };
    let mut node_sets = BTreeMap::new();
    node_sets.insert("bottom".to_string(), select(&|p| p[1].abs() <= tol));
    node_sets.insert("top".to_string(), select(&|p| (p[1] - hgt).abs() <= tol));
    node_sets.insert("left".to_string(), select(&|p| p[0].abs() <= tol));
    node_sets.insert("right".to_string(), select(&|p| (p[0] - w).abs() <= tol));

    Mesh::new(nodes, elems, node_sets)
}
