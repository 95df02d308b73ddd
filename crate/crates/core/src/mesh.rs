//! Structured quadrilateral meshes for the preset 2D geometries.
//!
//! All presets are generated as tensor-product grids (optionally graded
//! towards a refinement band), which keeps generation deterministic and
//! dependency-free. Element connectivity is counter-clockwise:
//!
//! ```text
//!   3 ---- 2
//!   |      |     local edges: 0 = (0,1) bottom, 1 = (1,2) right,
//!   0 ---- 1                  2 = (2,3) top,    3 = (3,0) left
//! ```
//!
//! The CT preset models the starter notch as a slit of duplicated nodes
//! along the mid-plane; the perforated plate removes elements overlapping
//! the holes and snaps boundary nodes onto the circles.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Duplicate-node detection tolerance in mm.
pub const NODE_TOLERANCE: f64 = 1e-12;

/// A 2D mesh of 4-node quadrilaterals with named boundary sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    /// Node coordinates (mm).
    pub nodes: Vec<[f64; 2]>,
    /// Element connectivity, counter-clockwise.
    pub elements: Vec<[usize; 4]>,
    /// Named node sets (sorted, deduplicated).
    pub node_sets: BTreeMap<String, Vec<usize>>,
    /// Named edge sets as (element, local edge) pairs.
    pub edge_sets: BTreeMap<String, Vec<(usize, usize)>>,
    /// Per-element characteristic size h (mm), the longest edge.
    pub char_length_h: Vec<f64>,
}

/// Rectangular refinement region with a target element size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineBand {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    /// Target element size inside the band (mm).
    pub h: f64,
}

/// Circular hole for the perforated plate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hole {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

/// Preset geometry descriptions. Dimensions are configuration inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeometryPreset {
    /// Plain rectangle `[0,width] x [0,height]`, optionally refined.
    Rectangle {
        width: f64,
        height: f64,
        h: f64,
        #[serde(default)]
        refine_band: Option<RefineBand>,
    },
    /// Strip whose left-edge halves are pulled apart; a horizontal band of
    /// uniform size `h_band` around the mid-plane hosts the crack.
    PullStrip {
        width: f64,
        height: f64,
        h_coarse: f64,
        band_half_width: f64,
        h_band: f64,
    },
    /// Compact-tension-like specimen: rectangle with a mid-plane starter
    /// slit and two pin node sets for load application.
    CtSpecimen {
        width: f64,
        height: f64,
        notch_length: f64,
        pin_x: f64,
        pin_offset_y: f64,
        pin_radius: f64,
        h_coarse: f64,
        band_half_width: f64,
        h_band: f64,
    },
    /// Rectangle with circular holes removed.
    HolePlate {
        width: f64,
        height: f64,
        h: f64,
        holes: Vec<Hole>,
    },
}

impl GeometryPreset {
    pub fn width(&self) -> f64 {
        match *self {
            GeometryPreset::Rectangle { width, .. }
            | GeometryPreset::PullStrip { width, .. }
            | GeometryPreset::CtSpecimen { width, .. }
            | GeometryPreset::HolePlate { width, .. } => width,
        }
    }

    pub fn height(&self) -> f64 {
        match *self {
            GeometryPreset::Rectangle { height, .. }
            | GeometryPreset::PullStrip { height, .. }
            | GeometryPreset::CtSpecimen { height, .. }
            | GeometryPreset::HolePlate { height, .. } => height,
        }
    }

    fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::MeshGeneration(m));
        if self.width() <= 0.0 || self.height() <= 0.0 {
            return err(format!(
                "domain has zero area: width {} x height {}",
                self.width(),
                self.height()
            ));
        }
        match self {
            GeometryPreset::Rectangle { h, refine_band, .. } => {
                if *h <= 0.0 {
                    return err(format!("element size h = {h} must be positive"));
                }
                if let Some(b) = refine_band {
                    if b.h <= 0.0 {
                        return err(format!("refine target h = {} must be positive", b.h));
                    }
                    if b.x_max <= b.x_min || b.y_max <= b.y_min {
                        return err("refinement band is empty".into());
                    }
                    if b.x_min >= self.width() || b.x_max <= 0.0 || b.y_min >= self.height() || b.y_max <= 0.0 {
                        return err("refinement band does not intersect the domain".into());
                    }
                }
            }
            GeometryPreset::PullStrip {
                h_coarse,
                band_half_width,
                h_band,
                ..
            } => {
                if *h_coarse <= 0.0 || *h_band <= 0.0 || *band_half_width <= 0.0 {
                    return err("pull strip sizes must be positive".into());
                }
            }
            GeometryPreset::CtSpecimen {
                width,
                notch_length,
                pin_x,
                pin_offset_y,
                pin_radius,
                h_coarse,
                h_band,
                band_half_width,
                ..
            } => {
                if *h_coarse <= 0.0 || *h_band <= 0.0 || *band_half_width <= 0.0 {
                    return err("CT sizes must be positive".into());
                }
                if *notch_length <= 0.0 || *notch_length >= *width {
                    return err(format!("notch length {notch_length} outside (0, width)"));
                }
                if *pin_radius <= 0.0 || *pin_x <= 0.0 || *pin_offset_y <= 0.0 {
                    return err("CT pin placement must be positive".into());
                }
            }
            GeometryPreset::HolePlate {
                width,
                height,
                h,
                holes,
            } => {
                if *h <= 0.0 {
                    return err(format!("element size h = {h} must be positive"));
                }
                for (i, a) in holes.iter().enumerate() {
                    if a.r <= 0.0 {
                        return err(format!("hole {i} has non-positive radius"));
                    }
                    if a.cx - a.r <= 0.0 || a.cx + a.r >= *width || a.cy - a.r <= 0.0 || a.cy + a.r >= *height {
                        return err(format!("hole {i} is not strictly inside the plate"));
                    }
                    for (j, b) in holes.iter().enumerate().skip(i + 1) {
                        let dist = ((a.cx - b.cx).powi(2) + (a.cy - b.cy).powi(2)).sqrt();
                        if dist <= a.r + b.r {
                            return err(format!("holes {i} and {j} overlap"));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Build a 1D axis of coordinates on `[0, length]`: step `h_fine` inside
/// `fine` intervals, `h_coarse` elsewhere. Each segment gets an integer
/// number of equal steps no larger than the target.
fn graded_axis(length: f64, fine: &[(f64, f64)], h_fine: f64, h_coarse: f64) -> Vec<f64> {
    let mut breaks = vec![0.0, length];
    for &(lo, hi) in fine {
        for v in [lo, hi] {
            if v > 1e-14 && v < length - 1e-14 {
                breaks.push(v);
            }
        }
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let mut coords = vec![0.0];
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let mid = 0.5 * (lo + hi);
        let in_fine = fine.iter().any(|&(a, b)| mid >= a - 1e-14 && mid <= b + 1e-14);
        let target = if in_fine { h_fine } else { h_coarse };
        let n = ((hi - lo) / target).ceil().max(1.0) as usize;
        for i in 1..=n {
            coords.push(lo + (hi - lo) * i as f64 / n as f64);
        }
    }
    coords
}

/// Symmetric axis on `[0, length]` with a node exactly at `length/2`:
/// the lower half is generated and mirrored.
fn symmetric_axis(length: f64, fine_half: &[(f64, f64)], h_fine: f64, h_coarse: f64) -> Vec<f64> {
    let half = graded_axis(length / 2.0, fine_half, h_fine, h_coarse);
    let mut coords = half.clone();
    for &c in half.iter().rev().skip(1) {
        coords.push(length - c);
    }
    coords
}

struct Grid {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Grid {
    fn node(&self, ix: usize, iy: usize) -> usize {
        iy * self.xs.len() + ix
    }

    fn build(&self) -> (Vec<[f64; 2]>, Vec<[usize; 4]>) {
        let mut nodes = Vec::with_capacity(self.xs.len() * self.ys.len());
        for &y in &self.ys {
            for &x in &self.xs {
                nodes.push([x, y]);
            }
        }
        let mut elements = Vec::with_capacity((self.xs.len() - 1) * (self.ys.len() - 1));
        for iy in 0..self.ys.len() - 1 {
            for ix in 0..self.xs.len() - 1 {
                elements.push([
                    self.node(ix, iy),
                    self.node(ix + 1, iy),
                    self.node(ix + 1, iy + 1),
                    self.node(ix, iy + 1),
                ]);
            }
        }
        (nodes, elements)
    }
}

/// Generate a mesh from a preset, including boundary tagging.
pub fn generate_mesh(preset: &GeometryPreset) -> Result<Mesh> {
    preset.validate()?;
    let mut mesh = match preset {
        GeometryPreset::Rectangle {
            width,
            height,
            h,
            refine_band,
        } => {
            let (fx, fy, hf) = match refine_band {
                Some(b) => (
                    vec![(b.x_min.max(0.0), b.x_max.min(*width))],
                    vec![(b.y_min.max(0.0), b.y_max.min(*height))],
                    b.h,
                ),
                None => (vec![], vec![], *h),
            };
            let grid = Grid {
                xs: graded_axis(*width, &fx, hf, *h),
                ys: graded_axis(*height, &fy, hf, *h),
            };
            let (nodes, elements) = grid.build();
            Mesh::from_raw(nodes, elements)?
        }
        GeometryPreset::PullStrip {
            width,
            height,
            h_coarse,
            band_half_width,
            h_band,
        } => {
            let ymid = height / 2.0;
            let grid = Grid {
                xs: graded_axis(*width, &[(0.0, *width)], *h_band, *h_band),
                ys: symmetric_axis(
                    *height,
                    &[((ymid - band_half_width).max(0.0), ymid)],
                    *h_band,
                    *h_coarse,
                ),
            };
            let (nodes, elements) = grid.build();
            Mesh::from_raw(nodes, elements)?
        }
        GeometryPreset::CtSpecimen {
            width,
            height,
            notch_length,
            h_coarse,
            band_half_width,
            h_band,
            ..
        } => {
            let ymid = height / 2.0;
            let grid = Grid {
                xs: graded_axis(*width, &[(0.0, *width)], *h_band, *h_band),
                ys: symmetric_axis(
                    *height,
                    &[((ymid - band_half_width).max(0.0), ymid)],
                    *h_band,
                    *h_coarse,
                ),
            };
            let (mut nodes, mut elements) = grid.build();
            split_slit(&grid, &mut nodes, &mut elements, *notch_length, ymid);
            Mesh::from_raw(nodes, elements)?
        }
        GeometryPreset::HolePlate {
            width,
            height,
            h,
            holes,
        } => {
            let grid = Grid {
                xs: graded_axis(*width, &[], *h, *h),
                ys: graded_axis(*height, &[], *h, *h),
            };
            let (nodes, elements) = grid.build();
            punch_holes(nodes, elements, holes)?
        }
    };
    mesh.validate()?;
    tag_boundaries(&mut mesh, preset)?;
    Ok(mesh)
}

/// Duplicate the mid-plane nodes for `x < notch_length` and reconnect the
/// elements below the slit to the copies, producing a traction-free cut.
fn split_slit(grid: &Grid, nodes: &mut Vec<[f64; 2]>, elements: &mut [[usize; 4]], notch_length: f64, ymid: f64) {
    let iy_mid = grid
        .ys
        .iter()
        .position(|&y| (y - ymid).abs() < 1e-12)
        .expect("symmetric axis has a mid-plane row");
    let mut dup: BTreeMap<usize, usize> = BTreeMap::new();
    for (ix, &x) in grid.xs.iter().enumerate() {
        // keep the node at the notch tip shared
        if x < notch_length - 1e-12 {
            let orig = grid.node(ix, iy_mid);
            let copy = nodes.len();
            nodes.push(nodes[orig]);
            dup.insert(orig, copy);
        }
    }
    // rows below the mid-plane touch the slit with their top edge (nodes 2, 3)
    for elem in elements.iter_mut() {
        for k in 2..4 {
            if let Some(&copy) = dup.get(&elem[k]) {
                elem[k] = copy;
            }
        }
    }
}

/// Remove elements whose center lies in a hole, then snap remaining nodes
/// that fall inside a hole radially onto its boundary.
fn punch_holes(nodes: Vec<[f64; 2]>, elements: Vec<[usize; 4]>, holes: &[Hole]) -> Result<Mesh> {
    let inside = |p: [f64; 2], hole: &Hole| -> f64 {
        hole.r - ((p[0] - hole.cx).powi(2) + (p[1] - hole.cy).powi(2)).sqrt()
    };
    let kept: Vec<[usize; 4]> = elements
        .into_iter()
        .filter(|e| {
            let cx = e.iter().map(|&n| nodes[n][0]).sum::<f64>() / 4.0;
            let cy = e.iter().map(|&n| nodes[n][1]).sum::<f64>() / 4.0;
            !holes.iter().any(|h| inside([cx, cy], h) > 0.0)
        })
        .collect();
    if kept.is_empty() {
        return Err(Error::MeshGeneration("holes removed every element".into()));
    }
    // drop unused nodes first, then snap the kept ones onto the circles
    let mut used = vec![false; nodes.len()];
    for e in &kept {
        for &n in e {
            used[n] = true;
        }
    }
    let mut nodes = nodes;
    for (i, p) in nodes.iter_mut().enumerate() {
        if !used[i] {
            continue;
        }
        for hole in holes {
            let depth = inside(*p, hole);
            if depth > 1e-12 {
                let dx = p[0] - hole.cx;
                let dy = p[1] - hole.cy;
                let dist = (dx * dx + dy * dy).sqrt();
                if dist < 1e-12 {
                    return Err(Error::MeshGeneration(format!(
                        "kept node coincides with hole center ({}, {})",
                        hole.cx, hole.cy
                    )));
                }
                let scale = hole.r / dist;
                p[0] = hole.cx + dx * scale;
                p[1] = hole.cy + dy * scale;
            }
        }
    }
    let mut remap = vec![usize::MAX; nodes.len()];
    let mut packed = Vec::new();
    for (i, keep) in used.iter().enumerate() {
        if *keep {
            remap[i] = packed.len();
            packed.push(nodes[i]);
        }
    }
    let elements = kept
        .into_iter()
        .map(|e| [remap[e[0]], remap[e[1]], remap[e[2]], remap[e[3]]])
        .collect();
    Mesh::from_raw(packed, elements)
}

impl Mesh {
    fn from_raw(nodes: Vec<[f64; 2]>, elements: Vec<[usize; 4]>) -> Result<Mesh> {
        let char_length_h = elements
            .iter()
            .map(|e| {
                (0..4)
                    .map(|k| {
                        let a = nodes[e[k]];
                        let b = nodes[e[(k + 1) % 4]];
                        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        Ok(Mesh {
            nodes,
            elements,
            node_sets: BTreeMap::new(),
            edge_sets: BTreeMap::new(),
            char_length_h,
        })
    }

    /// Corner Jacobian determinants of all elements must be positive, node
    /// indices in range, no duplicate nodes within [`NODE_TOLERANCE`].
    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.elements.iter().enumerate() {
            for &n in e {
                if n >= self.nodes.len() {
                    return Err(Error::MeshGeneration(format!(
                        "element {i} references node {n} out of range"
                    )));
                }
            }
            for k in 0..4 {
                let p = self.nodes[e[k]];
                let a = self.nodes[e[(k + 1) % 4]];
                let b = self.nodes[e[(k + 3) % 4]];
                let cross = (a[0] - p[0]) * (b[1] - p[1]) - (a[1] - p[1]) * (b[0] - p[0]);
                if cross <= 0.0 {
                    return Err(Error::MeshGeneration(format!(
                        "element {i} has non-positive Jacobian at corner {k}"
                    )));
                }
            }
        }
        // duplicate detection: sweep over x-sorted nodes
        let mut order: Vec<usize> = (0..self.nodes.len()).collect();
        order.sort_by(|&a, &b| self.nodes[a][0].partial_cmp(&self.nodes[b][0]).unwrap());
        for (i, &a) in order.iter().enumerate() {
            for &b in order[i + 1..].iter() {
                if self.nodes[b][0] - self.nodes[a][0] > NODE_TOLERANCE {
                    break;
                }
                if (self.nodes[b][1] - self.nodes[a][1]).abs() <= NODE_TOLERANCE && !self.is_slit_pair(a, b) {
                    return Err(Error::MeshGeneration(format!("duplicate nodes {a} and {b}")));
                }
            }
        }
        for (name, set) in &self.node_sets {
            if set.iter().any(|&n| n >= self.nodes.len()) {
                return Err(Error::MeshGeneration(format!("node set '{name}' out of range")));
            }
        }
        Ok(())
    }

    /// Slit duplicates are intentional coincident pairs: they never share
    /// an element.
    fn is_slit_pair(&self, a: usize, b: usize) -> bool {
        !self
            .elements
            .iter()
            .any(|e| e.contains(&a) && e.contains(&b))
    }

    pub fn node_set(&self, name: &str) -> Result<&[usize]> {
        self.node_sets
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::MeshGeneration(format!("node set '{name}' does not exist")))
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    /// Plain-text export: `nodes <count>`, `x y` lines, `elements <count>`,
    /// `n0 n1 n2 n3` lines, then `set <name> <count>` blocks. Single spaces,
    /// LF line endings.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "nodes {}", self.nodes.len());
        for n in &self.nodes {
            let _ = writeln!(s, "{} {}", n[0], n[1]);
        }
        let _ = writeln!(s, "elements {}", self.elements.len());
        for e in &self.elements {
            let _ = writeln!(s, "{} {} {} {}", e[0], e[1], e[2], e[3]);
        }
        for (name, set) in &self.node_sets {
            let _ = writeln!(s, "set {} {}", name, set.len());
            for &i in set {
                let _ = writeln!(s, "{i}");
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Mesh> {
        let mut lines = text.lines();
        let bad = |m: &str| Error::MeshIo(m.to_string());
        let header = |line: Option<&str>, tag: &str| -> Result<usize> {
            let line = line.ok_or_else(|| bad("unexpected end of file"))?;
            let mut it = line.split(' ');
            if it.next() != Some(tag) {
                return Err(bad(&format!("expected '{tag}' header, got '{line}'")));
            }
            it.next()
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| bad(&format!("bad count in '{line}'")))
        };
        let n_nodes = header(lines.next(), "nodes")?;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let line = lines.next().ok_or_else(|| bad("missing node line"))?;
            let mut it = line.split(' ').map(|t| t.parse::<f64>());
            match (it.next(), it.next()) {
                (Some(Ok(x)), Some(Ok(y))) => nodes.push([x, y]),
                _ => return Err(bad(&format!("bad node line '{line}'"))),
            }
        }
        let n_elems = header(lines.next(), "elements")?;
        let mut elements = Vec::with_capacity(n_elems);
        for _ in 0..n_elems {
            let line = lines.next().ok_or_else(|| bad("missing element line"))?;
            let ids: Vec<usize> = line.split(' ').filter_map(|t| t.parse().ok()).collect();
            if ids.len() != 4 {
                return Err(bad(&format!("bad element line '{line}'")));
            }
            elements.push([ids[0], ids[1], ids[2], ids[3]]);
        }
        let mut mesh = Mesh::from_raw(nodes, elements)?;
        while let Some(line) = lines.next() {
            if line.is_empty() {
                continue;
            }
            let mut it = line.split(' ');
            if it.next() != Some("set") {
                return Err(bad(&format!("expected 'set' header, got '{line}'")));
            }
            let name = it.next().ok_or_else(|| bad("set without a name"))?.to_string();
            let count: usize = it
                .next()
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| bad("bad set count"))?;
            let mut ids = Vec::with_capacity(count);
            for _ in 0..count {
                let line = lines.next().ok_or_else(|| bad("missing set index"))?;
                ids.push(line.parse().map_err(|_| bad(&format!("bad set index '{line}'")))?);
            }
            mesh.node_sets.insert(name, ids);
        }
        mesh.validate()?;
        Ok(mesh)
    }
}

/// Populate node and edge sets for a preset. Safe to call repeatedly.
pub fn tag_boundaries(mesh: &mut Mesh, preset: &GeometryPreset) -> Result<Mesh> {
    let w = preset.width();
    let h = preset.height();
    let eps = 1e-9 * w.max(h);
    mesh.node_sets.clear();
    mesh.edge_sets.clear();

    let select = |mesh: &Mesh, f: &dyn Fn(&[f64; 2]) -> bool| -> Vec<usize> {
        (0..mesh.nodes.len()).filter(|&i| f(&mesh.nodes[i])).collect()
    };
    let left = select(mesh, &|p| p[0] < eps);
    let right = select(mesh, &|p| p[0] > w - eps);
    let bottom = select(mesh, &|p| p[1] < eps);
    let top = select(mesh, &|p| p[1] > h - eps);
    mesh.node_sets.insert("left".into(), left.clone());
    mesh.node_sets.insert("right".into(), right);
    mesh.node_sets.insert("bottom".into(), bottom);
    mesh.node_sets.insert("top".into(), top);

    match preset {
        GeometryPreset::Rectangle { .. } | GeometryPreset::HolePlate { .. } => {}
        GeometryPreset::PullStrip { height, .. } => {
            let ymid = height / 2.0;
            let upper: Vec<usize> = left.iter().copied().filter(|&i| mesh.nodes[i][1] > ymid + eps).collect();
            let lower: Vec<usize> = left.iter().copied().filter(|&i| mesh.nodes[i][1] < ymid - eps).collect();
            mesh.node_sets.insert("left_edge_upper".into(), upper);
            mesh.node_sets.insert("left_edge_lower".into(), lower);
        }
        GeometryPreset::CtSpecimen {
            height,
            pin_x,
            pin_offset_y,
            pin_radius,
            ..
        } => {
            let ymid = height / 2.0;
            let pin = |mesh: &Mesh, cy: f64| -> Vec<usize> {
                (0..mesh.nodes.len())
                    .filter(|&i| {
                        let p = mesh.nodes[i];
                        ((p[0] - pin_x).powi(2) + (p[1] - cy).powi(2)).sqrt() <= *pin_radius + eps
                    })
                    .collect()
            };
            let upper = pin(mesh, ymid + pin_offset_y);
            let lower = pin(mesh, ymid - pin_offset_y);
            if upper.is_empty() || lower.is_empty() {
                return Err(Error::MeshGeneration(
                    "CT pin radius captures no nodes; enlarge pin_radius or refine".into(),
                ));
            }
            mesh.node_sets.insert("upper_pin".into(), upper);
            mesh.node_sets.insert("lower_pin".into(), lower);
        }
    }

    // boundary edge sets: element edges whose both nodes lie on the face
    let on = |p: &[f64; 2], face: usize| -> bool {
        match face {
            0 => p[0] < eps,
            1 => p[0] > w - eps,
            2 => p[1] < eps,
            _ => p[1] > h - eps,
        }
    };
    let names = ["left", "right", "bottom", "top"];
    for (face, name) in names.iter().enumerate() {
        let mut edges = Vec::new();
        for (ei, e) in mesh.elements.iter().enumerate() {
            for le in 0..4 {
                let a = &mesh.nodes[e[le]];
                let b = &mesh.nodes[e[(le + 1) % 4]];
                if on(a, face) && on(b, face) {
                    edges.push((ei, le));
                }
            }
        }
        mesh.edge_sets.insert((*name).to_string(), edges);
    }
    Ok(mesh.clone())
}
