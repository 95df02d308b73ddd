//! Crack metrology: discrete node-threshold tracking, interpolated crack-tip
//! tracking along a known path, and the smeared crack length.
//!
//! The smeared length equates the integral of the phase field D_num with the
//! integral of the optimal profile, split into an extrusion along the crack
//! and k revolved half-profiles at the tips:
//!
//! ```text
//!   D_opt = a * D_ext' + k * D_tip
//!   AT1: D_ext' = 4/3 l,  D_tip = pi/3 l^2
//!   AT2: D_ext' = 2 l,    D_tip = pi l^2
//! ```
//!
//! The corrected form ignores the profile below the irreversibility-safe
//! threshold d_rel (0.25 for AT1, exp(-1) for AT2) and rescales with the
//! restricted constants (7/6 l and 11/48 pi l^2 for AT1; 2l(1-1/e) and
//! pi l^2 (1-2/e) for AT2) plus the empirical factors c_tip and c_ext.
//!
//! All nodal fields here are in mesh node ordering.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fem::QuadData;
use crate::mesh::Mesh;
use crate::model::Dissipation;

/// Crack length by the three methods at one cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrackMeasure {
    pub cycle: u64,
    pub a_discrete: f64,
    /// None when the projected phase field never crosses the threshold.
    pub a_interpolated: Option<f64>,
    pub a_smeared_raw: f64,
    pub a_smeared_corrected: f64,
}

/// Configuration of the smeared crack length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmearedConfig {
    pub model: Dissipation,
    /// Regularization length (mm).
    pub ell: f64,
    /// Expected number of crack tips.
    pub k_tips: u32,
    pub c_tip: f64,
    pub c_ext: f64,
    /// Relevance threshold of the corrected form.
    pub d_rel: f64,
    /// Use the L1-norm shortcut instead of numerical quadrature.
    pub use_l1: bool,
}

impl SmearedConfig {
    /// Uncorrected configuration (c = 1) with the model's d_rel.
    pub fn uncorrected(model: Dissipation, ell: f64, k_tips: u32) -> SmearedConfig {
        SmearedConfig {
            model,
            ell,
            k_tips,
            c_tip: 1.0,
            c_ext: 1.0,
            d_rel: default_d_rel(model),
            use_l1: false,
        }
    }

    /// Correction factors looked up from a table by round(l/h).
    pub fn with_table(
        model: Dissipation,
        ell: f64,
        ell_over_h: f64,
        k_tips: u32,
        table: &CorrectionTable,
    ) -> SmearedConfig {
        let (c_tip, c_ext) = table.lookup(model, ell_over_h);
        SmearedConfig {
            model,
            ell,
            k_tips,
            c_tip,
            c_ext,
            d_rel: default_d_rel(model),
            use_l1: false,
        }
    }
}

pub fn default_d_rel(model: Dissipation) -> f64 {
    match model {
        Dissipation::At1 => 0.25,
        Dissipation::At2 => (-1.0f64).exp(),
    }
}

/// Full-profile extrusion integral per unit crack length.
pub fn ext_constant(model: Dissipation, ell: f64) -> f64 {
    match model {
        Dissipation::At1 => 4.0 / 3.0 * ell,
        Dissipation::At2 => 2.0 * ell,
    }
}

/// Full revolved tip integral.
pub fn tip_constant(model: Dissipation, ell: f64) -> f64 {
    match model {
        Dissipation::At1 => PI / 3.0 * ell * ell,
        Dissipation::At2 => PI * ell * ell,
    }
}

/// Extrusion integral per unit length restricted to d >= d_rel.
pub fn ext_constant_restricted(model: Dissipation, ell: f64) -> f64 {
    match model {
        Dissipation::At1 => 7.0 / 6.0 * ell,
        Dissipation::At2 => 2.0 * ell * (1.0 - (-1.0f64).exp()),
    }
}

/// Tip integral restricted to d >= d_rel.
pub fn tip_constant_restricted(model: Dissipation, ell: f64) -> f64 {
    match model {
        Dissipation::At1 => 11.0 / 48.0 * PI * ell * ell,
        Dissipation::At2 => PI * ell * ell * (1.0 - 2.0 * (-1.0f64).exp()),
    }
}

/// Maximum projection of broken nodes (d >= d_th) onto `direction` from
/// `origin`; zero when no node is broken.
pub fn discrete_crack_length(
    d_nodal: &[f64],
    mesh: &Mesh,
    d_th: f64,
    origin: [f64; 2],
    direction: [f64; 2],
) -> f64 {
    let mut a: f64 = 0.0;
    for (i, p) in mesh.nodes.iter().enumerate() {
        if d_nodal[i] >= d_th {
            let proj = (p[0] - origin[0]) * direction[0] + (p[1] - origin[1]) * direction[1];
            a = a.max(proj);
        }
    }
    a
}

/// Precomputed sample locations along a crack path: element index plus shape
/// weights per sample, so repeated tip queries cost O(samples).
#[derive(Debug, Clone)]
pub struct CrackPath {
    /// Arc length of each sample.
    arc: Vec<f64>,
    /// (element, shape values) per sample; None for samples outside the mesh.
    samples: Vec<Option<(usize, [f64; 4])>>,
}

impl CrackPath {
    /// Sample the polyline every `spacing` mm and locate each sample in the
    /// mesh by inverse bilinear mapping.
    pub fn new(mesh: &Mesh, polyline: &[[f64; 2]], spacing: f64) -> Result<CrackPath> {
        if polyline.len() < 2 {
            return Err(Error::Config("crack path needs at least two points".into()));
        }
        if spacing <= 0.0 {
            return Err(Error::Config("crack path spacing must be positive".into()));
        }
        let mut arc = Vec::new();
        let mut pts = Vec::new();
        let mut s0 = 0.0;
        for seg in polyline.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            let n = (len / spacing).ceil().max(1.0) as usize;
            for i in 0..n {
                let t = i as f64 / n as f64;
                arc.push(s0 + t * len);
                pts.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
            }
            s0 += len;
        }
        arc.push(s0);
        pts.push(*polyline.last().unwrap());

        let samples = pts.iter().map(|&p| locate(mesh, p)).collect();
        Ok(CrackPath { arc, samples })
    }

    /// Arc-length position where the interpolated phase field crosses
    /// `d_th`, scanning for the furthest broken sample. None when the path
    /// never reaches the threshold; the full path length when it never
    /// drops below it.
    pub fn tip_position(&self, d_nodal: &[f64], mesh: &Mesh, d_th: f64) -> Option<f64> {
        let values: Vec<Option<f64>> = self
            .samples
            .iter()
            .map(|s| {
                s.map(|(e, shape)| {
                    let elem = mesh.elements[e];
                    (0..4).map(|a| shape[a] * d_nodal[elem[a]]).sum()
                })
            })
            .collect();
        let mut last_broken: Option<usize> = None;
        for (i, v) in values.iter().enumerate() {
            if matches!(v, Some(d) if *d >= d_th) {
                last_broken = Some(i);
            }
        }
        let i = last_broken?;
        // linear interpolation towards the next sample below the threshold
        match (values[i], values.get(i + 1).copied().flatten()) {
            (Some(da), Some(db)) if db < d_th && da > db => {
                let t = (da - d_th) / (da - db);
                Some(self.arc[i] + t * (self.arc[i + 1] - self.arc[i]))
            }
            _ => Some(self.arc[i]),
        }
    }
}

/// Locate a point in the mesh: returns element and shape values.
fn locate(mesh: &Mesh, p: [f64; 2]) -> Option<(usize, [f64; 4])> {
    for (ei, elem) in mesh.elements.iter().enumerate() {
        let xy: Vec<[f64; 2]> = elem.iter().map(|&n| mesh.nodes[n]).collect();
        let (min_x, max_x) = xy
            .iter()
            .fold((f64::MAX, f64::MIN), |(lo, hi), q| (lo.min(q[0]), hi.max(q[0])));
        let (min_y, max_y) = xy
            .iter()
            .fold((f64::MAX, f64::MIN), |(lo, hi), q| (lo.min(q[1]), hi.max(q[1])));
        let tol = 1e-9 * (max_x - min_x + max_y - min_y).max(1e-9);
        if p[0] < min_x - tol || p[0] > max_x + tol || p[1] < min_y - tol || p[1] > max_y + tol {
            continue;
        }
        // inverse bilinear map by Newton iteration
        let mut xi = 0.0;
        let mut eta = 0.0;
        for _ in 0..20 {
            let (n, dn) = crate::fem::shape_functions((xi, eta));
            let mut r = [-p[0], -p[1]];
            let mut j = [[0.0; 2]; 2];
            for a in 0..4 {
                r[0] += n[a] * xy[a][0];
                r[1] += n[a] * xy[a][1];
                for c in 0..2 {
                    j[0][c] += dn[a][c] * xy[a][0];
                    j[1][c] += dn[a][c] * xy[a][1];
                }
            }
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if det.abs() < 1e-30 {
                break;
            }
            let dxi = (j[1][1] * r[0] - j[0][1] * r[1]) / det;
            let deta = (-j[1][0] * r[0] + j[0][0] * r[1]) / det;
            xi -= dxi;
            eta -= deta;
            if dxi.abs() + deta.abs() < 1e-13 {
                break;
            }
        }
        if xi.abs() <= 1.0 + 1e-9 && eta.abs() <= 1.0 + 1e-9 {
            let (n, _) = crate::fem::shape_functions((xi.clamp(-1.0, 1.0), eta.clamp(-1.0, 1.0)));
            return Some((ei, n));
        }
    }
    None
}

/// Result of a smeared-length evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmearedLength {
    pub raw: f64,
    pub corrected: f64,
    /// Set when D_num fell below the tip term and the length was clamped.
    pub raw_clamped: bool,
    pub corrected_clamped: bool,
    /// Set when the L1 shortcut detected a non-uniform support.
    pub non_uniform_support: bool,
}

/// Smeared crack length by numerical quadrature of the phase field.
pub fn smeared_crack_length(d_nodal: &[f64], mesh: &Mesh, quad: &QuadData, cfg: &SmearedConfig) -> SmearedLength {
    let mut d_full = 0.0;
    let mut d_rel = 0.0;
    for (ei, elem) in mesh.elements.iter().enumerate() {
        for qp in &quad.points[ei] {
            let d: f64 = (0..4).map(|a| qp.shape[a] * d_nodal[elem[a]]).sum::<f64>().max(0.0);
            d_full += d * qp.detjw;
            if d >= cfg.d_rel {
                d_rel += d * qp.detjw;
            }
        }
    }
    invert(d_full, d_rel, cfg, false)
}

/// Smeared crack length through the L1-norm shortcut, valid for a uniformly
/// discretized phase-field support. The result is returned even when the
/// support is detected as non-uniform, with the flag set.
pub fn smeared_via_l1(d_nodal: &[f64], mesh: &Mesh, quad: &QuadData, cfg: &SmearedConfig) -> SmearedLength {
    smeared_via_l1_selected(d_nodal, mesh, quad, cfg, |_| true)
}

/// L1 variant restricted to nodes selected by a predicate (the calibration
/// harness restricts to a subdomain away from the loaded boundary).
pub fn smeared_via_l1_selected(
    d_nodal: &[f64],
    mesh: &Mesh,
    quad: &QuadData,
    cfg: &SmearedConfig,
    select: impl Fn([f64; 2]) -> bool,
) -> SmearedLength {
    let ints = l1_integrals(d_nodal, mesh, quad, cfg.d_rel, select);
    invert(ints.full, ints.restricted, cfg, ints.non_uniform)
}

/// Phase-field integrals from the L1 shortcut: D_num over the selected
/// nodes, full and restricted to d >= d_rel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1Integrals {
    pub full: f64,
    pub restricted: f64,
    pub non_uniform: bool,
}

pub fn l1_integrals(
    d_nodal: &[f64],
    mesh: &Mesh,
    quad: &QuadData,
    d_rel: f64,
    select: impl Fn([f64; 2]) -> bool,
) -> L1Integrals {
    let mut jw: Option<f64> = None;
    let mut non_uniform = false;
    for (ei, elem) in mesh.elements.iter().enumerate() {
        if !elem.iter().any(|&n| d_nodal[n] > 1e-6 && select(mesh.nodes[n])) {
            continue;
        }
        let area: f64 = quad.points[ei].iter().map(|q| q.detjw).sum();
        match jw {
            None => jw = Some(area),
            Some(a0) => {
                if (area - a0).abs() > 1e-9 * a0 {
                    non_uniform = true;
                }
            }
        }
    }
    let jw = jw.unwrap_or(0.0);
    let mut full = 0.0;
    let mut restricted = 0.0;
    for (i, &d) in d_nodal.iter().enumerate() {
        if !select(mesh.nodes[i]) {
            continue;
        }
        full += d.max(0.0) * jw;
        if d >= d_rel {
            restricted += d.max(0.0) * jw;
        }
    }
    L1Integrals {
        full,
        restricted,
        non_uniform,
    }
}

fn invert(d_full: f64, d_rel: f64, cfg: &SmearedConfig, non_uniform: bool) -> SmearedLength {
    let k = cfg.k_tips as f64;
    let raw_num = d_full - k * tip_constant(cfg.model, cfg.ell);
    let raw = raw_num / ext_constant(cfg.model, cfg.ell);
    let cor_num = d_rel - k * cfg.c_tip * tip_constant_restricted(cfg.model, cfg.ell);
    let corrected = cor_num / (cfg.c_ext * ext_constant_restricted(cfg.model, cfg.ell));
    SmearedLength {
        raw: raw.max(0.0),
        corrected: corrected.max(0.0),
        raw_clamped: raw < 0.0,
        corrected_clamped: corrected < 0.0,
        non_uniform_support: non_uniform,
    }
}

/// Secant crack growth rates between successive crossings of an `a`-grid
/// with spacing `delta_a_eval`, anchored at the first record.
pub fn crack_growth_rate(records: &[(u64, f64)], delta_a_eval: f64) -> Vec<(f64, f64)> {
    if records.len() < 2 || delta_a_eval <= 0.0 {
        return Vec::new();
    }
    let a0 = records[0].1;
    let mut crossings: Vec<(u64, f64)> = vec![(records[0].0, a0)];
    let mut next_level = a0 + delta_a_eval;
    for &(n, a) in records.iter().skip(1) {
        if a >= next_level {
            crossings.push((n, a));
            while next_level <= a {
                next_level += delta_a_eval;
            }
        }
    }
    crossings
        .windows(2)
        .filter(|w| w[1].0 > w[0].0)
        .map(|w| {
            let dn = (w[1].0 - w[0].0) as f64;
            (w[0].1, (w[1].1 - w[0].1) / dn)
        })
        .collect()
}

/// Correction factors keyed by (model, round(l/h)).
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionTable {
    pub entries: BTreeMap<(Dissipation, u32), (f64, f64)>,
}

impl CorrectionTable {
    /// Factors obtained with bilinear quadrilaterals, d_th = 0.95 and the
    /// d_rel restriction; regenerate with the calibration harness when the
    /// discretization differs.
    pub fn shipped() -> CorrectionTable {
        let mut entries = BTreeMap::new();
        let at1 = [
            (2, 3.171, 1.582),
            (3, 2.244, 1.390),
            (4, 1.846, 1.302),
            (5, 1.680, 1.249),
            (6, 1.539, 1.211),
            (7, 1.468, 1.187),
            (8, 1.416, 1.171),
        ];
        let at2 = [
            (2, 3.931, 1.604),
            (3, 2.875, 1.411),
            (4, 2.410, 1.323),
            (5, 2.136, 1.271),
            (6, 2.014, 1.228),
            (7, 1.893, 1.204),
            (8, 1.812, 1.185),
        ];
        for (r, tip, ext) in at1 {
            entries.insert((Dissipation::At1, r), (tip, ext));
        }
        for (r, tip, ext) in at2 {
            entries.insert((Dissipation::At2, r), (tip, ext));
        }
        CorrectionTable { entries }
    }

    /// Nearest tabulated ratio; clamps to the table range.
    pub fn lookup(&self, model: Dissipation, ell_over_h: f64) -> (f64, f64) {
        let keys: Vec<u32> = self
            .entries
            .keys()
            .filter(|(m, _)| *m == model)
            .map(|&(_, r)| r)
            .collect();
        if keys.is_empty() {
            return (1.0, 1.0);
        }
        let r = ell_over_h.round().max(1.0) as u32;
        let nearest = keys
            .iter()
            .copied()
            .min_by_key(|&k| (k as i64 - r as i64).abs())
            .unwrap();
        self.entries[&(model, nearest)]
    }

    /// CSV serialization: `model,ell_over_h,c_tip,c_ext`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,ell_over_h,c_tip,c_ext\n");
        for (&(model, r), &(tip, ext)) in &self.entries {
            let name = match model {
                Dissipation::At1 => "at1",
                Dissipation::At2 => "at2",
            };
            s.push_str(&format!("{name},{r},{tip},{ext}\n"));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<CorrectionTable> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 || line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(Error::Config(format!("bad correction row '{line}'")));
            }
            let model = match cols[0] {
                "at1" => Dissipation::At1,
                "at2" => Dissipation::At2,
                other => return Err(Error::Config(format!("unknown model '{other}'"))),
            };
            let r: u32 = cols[1]
                .parse()
                .map_err(|_| Error::Config(format!("bad l/h '{}'", cols[1])))?;
            let tip: f64 = cols[2]
                .parse()
                .map_err(|_| Error::Config(format!("bad c_tip '{}'", cols[2])))?;
            let ext: f64 = cols[3]
                .parse()
                .map_err(|_| Error::Config(format!("bad c_ext '{}'", cols[3])))?;
            entries.insert((model, r), (tip, ext));
        }
        Ok(CorrectionTable { entries })
    }
}

/// Synthetic phase fields built from the analytic optimal profiles; used by
/// the verification suite to exercise the smeared length in isolation.
pub mod synthetic {
    use super::*;

    /// Optimal 1D profile value at distance `dist` from the crack.
    pub fn optimal_profile(model: Dissipation, ell: f64, dist: f64) -> f64 {
        match model {
            Dissipation::At1 => {
                let t = 1.0 - dist.abs() / (2.0 * ell);
                if t > 0.0 {
                    t * t
                } else {
                    0.0
                }
            }
            Dissipation::At2 => (-dist.abs() / ell).exp(),
        }
    }

    /// Nodal field of a straight crack along y = y_mid from x0 to x1, with
    /// revolved tips on the requested ends.
    pub fn crack_field(
        mesh: &Mesh,
        model: Dissipation,
        ell: f64,
        y_mid: f64,
        x0: f64,
        x1: f64,
        tip_at_x0: bool,
        tip_at_x1: bool,
    ) -> Vec<f64> {
        mesh.nodes
            .iter()
            .map(|p| {
                let dy = p[1] - y_mid;
                let dist = if p[0] >= x0 && p[0] <= x1 {
                    dy.abs()
                } else if p[0] < x0 {
                    if tip_at_x0 {
                        ((p[0] - x0).powi(2) + dy * dy).sqrt()
                    } else {
                        dy.abs()
                    }
                } else if tip_at_x1 {
                    ((p[0] - x1).powi(2) + dy * dy).sqrt()
                } else {
                    dy.abs()
                };
                optimal_profile(model, ell, dist)
            })
            .collect()
    }
}
