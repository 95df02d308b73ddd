//! Constitutive content of the phase-field fatigue model.
//!
//! Degradation g(d) = (1-d)^2 + g0 couples the phase field to the active
//! part of the elastic energy. Local dissipation is w(d) = d (AT1, c_w = 8/3)
//! or w(d) = d^2 (AT2, c_w = 2). The fatigue history variable accumulates
//! positive increments of the local fatigue variable a = g(d) psi_plus and
//! degrades the toughness through f(abar), which is 1 below the threshold
//! abar_th and (1 - (abar - abar_th)/(abar + abar_th))^p above it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dissipation {
    At1,
    At2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    None,
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    Stress,
    Strain,
}

/// Elastic and phase-field material parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    /// Young's modulus (MPa).
    pub e: f64,
    /// Poisson ratio.
    pub nu: f64,
    /// Critical energy release rate (MPa mm).
    pub gc: f64,
    /// Regularization length (mm).
    pub ell: f64,
    /// Residual stiffness.
    #[serde(default = "default_g0")]
    pub g0: f64,
    pub dissipation: Dissipation,
    pub split: Split,
    pub plane: Plane,
}

fn default_g0() -> f64 {
    1e-6
}

impl Material {
    pub fn validate(&self) -> Result<()> {
        if self.e <= 0.0
            || self.nu <= -1.0
            || self.nu >= 0.5
            || self.gc <= 0.0
            || self.ell <= 0.0
            || self.g0 <= 0.0
            || self.g0 >= 1e-2
        {
            return Err(Error::Config(format!(
                "invalid material: E={} nu={} Gc={} ell={} g0={}",
                self.e, self.nu, self.gc, self.ell, self.g0
            )));
        }
        Ok(())
    }

    /// Effective Lame constants for the 2D reduction.
    pub fn lame(&self) -> (f64, f64) {
        let lambda = self.e * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu));
        let mu = self.e / (2.0 * (1.0 + self.nu));
        match self.plane {
            Plane::Strain => (lambda, mu),
            Plane::Stress => (2.0 * lambda * mu / (lambda + 2.0 * mu), mu),
        }
    }

    pub fn c_w(&self) -> f64 {
        match self.dissipation {
            Dissipation::At1 => 8.0 / 3.0,
            Dissipation::At2 => 2.0,
        }
    }
}

/// Fatigue degradation parameters of f(abar).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FatigueParams {
    /// Threshold of the fatigue history variable (N mm^-2).
    pub alpha_th: f64,
    /// Degradation-rate exponent.
    pub p_exp: f64,
}

impl FatigueParams {
    pub fn validate(&self) -> Result<()> {
        if self.alpha_th <= 0.0 || self.p_exp <= 0.0 {
            return Err(Error::Config(format!(
                "invalid fatigue parameters: alpha_th={} p={}",
                self.alpha_th, self.p_exp
            )));
        }
        Ok(())
    }
}

const DOMAIN_TOL: f64 = 1e-9;

/// Degradation function g(d) = (1-d)^2 + g0 and its derivative.
pub fn degradation(d: f64, g0: f64) -> Result<(f64, f64)> {
    if d < -DOMAIN_TOL || d > 1.0 + DOMAIN_TOL {
        return Err(Error::Domain(format!("damage d = {d} outside [0, 1]")));
    }
    let d = d.clamp(0.0, 1.0);
    Ok(((1.0 - d) * (1.0 - d) + g0, -2.0 * (1.0 - d)))
}

/// Local dissipation w(d), its derivative and the normalization c_w.
pub fn dissipation(d: f64, model: Dissipation) -> Result<(f64, f64, f64)> {
    if d < -DOMAIN_TOL || d > 1.0 + DOMAIN_TOL {
        return Err(Error::Domain(format!("damage d = {d} outside [0, 1]")));
    }
    let d = d.clamp(0.0, 1.0);
    Ok(match model {
        Dissipation::At1 => (d, 1.0, 8.0 / 3.0),
        Dissipation::At2 => (d * d, 2.0 * d, 2.0),
    })
}

/// Fatigue degradation f(abar); 1 below the threshold, decreasing above.
pub fn fatigue_degradation(alpha_bar: f64, params: &FatigueParams) -> f64 {
    if alpha_bar <= params.alpha_th {
        1.0
    } else {
        (1.0 - (alpha_bar - params.alpha_th) / (alpha_bar + params.alpha_th)).powf(params.p_exp)
    }
}

/// Energy split at one quadrature point: active/inactive energies, the
/// corresponding stresses and algorithmically consistent tangents, all in
/// engineering Voigt order `[e_xx, e_yy, gamma_xy]`.
#[derive(Debug, Clone, Copy)]
pub struct EnergySplit {
    pub psi_plus: f64,
    pub psi_minus: f64,
    pub sig_plus: [f64; 3],
    pub sig_minus: [f64; 3],
    pub c_plus: [[f64; 3]; 3],
    pub c_minus: [[f64; 3]; 3],
}

impl EnergySplit {
    /// Stress per Eq. of the momentum balance: g(d) dpsi+/de + dpsi-/de.
    pub fn stress(&self, g: f64) -> [f64; 3] {
        [
            g * self.sig_plus[0] + self.sig_minus[0],
            g * self.sig_plus[1] + self.sig_minus[1],
            g * self.sig_plus[2] + self.sig_minus[2],
        ]
    }

    pub fn tangent(&self, g: f64) -> [[f64; 3]; 3] {
        let mut c = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                c[i][j] = g * self.c_plus[i][j] + self.c_minus[i][j];
            }
        }
        c
    }
}

/// Perturbation applied when strain eigenvalues coincide.
const EIG_PERTURBATION: f64 = 1e-12;

/// Split the elastic strain energy of a 2D strain state.
pub fn split_energy(strain: [f64; 3], material: &Material) -> EnergySplit {
    let (lambda, mu) = material.lame();
    match material.split {
        Split::None => {
            let tr = strain[0] + strain[1];
            let exy = 0.5 * strain[2];
            let psi = 0.5 * lambda * tr * tr + mu * (strain[0] * strain[0] + strain[1] * strain[1] + 2.0 * exy * exy);
            let sig = [
                lambda * tr + 2.0 * mu * strain[0],
                lambda * tr + 2.0 * mu * strain[1],
                mu * strain[2],
            ];
            let c = [
                [lambda + 2.0 * mu, lambda, 0.0],
                [lambda, lambda + 2.0 * mu, 0.0],
                [0.0, 0.0, mu],
            ];
            EnergySplit {
                psi_plus: psi,
                psi_minus: 0.0,
                sig_plus: sig,
                sig_minus: [0.0; 3],
                c_plus: c,
                c_minus: [[0.0; 3]; 3],
            }
        }
        Split::Spectral => spectral_split(strain, lambda, mu),
    }
}

fn spectral_split(strain: [f64; 3], lambda: f64, mu: f64) -> EnergySplit {
    let exx = strain[0];
    let eyy = strain[1];
    let exy = 0.5 * strain[2];
    let tr = exx + eyy;
    let mid = 0.5 * tr;
    let rad = (0.25 * (exx - eyy) * (exx - eyy) + exy * exy).sqrt();
    let e1 = mid + rad;
    let e2 = mid - rad;
    // eigenvector of e1: angle from principal direction
    let (c, s) = if rad < 1e-30 {
        (1.0, 0.0)
    } else {
        let theta = 0.5 * (2.0 * exy).atan2(exx - eyy);
        (theta.cos(), theta.sin())
    };
    let n1 = [c, s];
    let n2 = [-s, c];

    let pos = |x: f64| x.max(0.0);
    let neg = |x: f64| x.min(0.0);
    let heav = |x: f64| if x > 0.0 { 1.0 } else { 0.0 };

    let psi = |tr_p: f64, a1: f64, a2: f64| 0.5 * lambda * tr_p * tr_p + mu * (a1 * a1 + a2 * a2);
    let psi_plus = psi(pos(tr), pos(e1), pos(e2));
    let psi_minus = psi(neg(tr), neg(e1), neg(e2));

    // Voigt representation [n_x^2, n_y^2, n_x n_y] of n (x) n; the shear slot
    // carries the tensor component, doubled where the gamma convention needs it.
    let basis = |n: [f64; 2]| [n[0] * n[0], n[1] * n[1], n[0] * n[1]];
    let v1 = basis(n1);
    let v2 = basis(n2);

    let stress = |tr_p: f64, a1: f64, a2: f64| {
        [
            lambda * tr_p + 2.0 * mu * (a1 * v1[0] + a2 * v2[0]),
            lambda * tr_p + 2.0 * mu * (a1 * v1[1] + a2 * v2[1]),
            2.0 * mu * (a1 * v1[2] + a2 * v2[2]),
        ]
    };
    let sig_plus = stress(pos(tr), pos(e1), pos(e2));
    let sig_minus = stress(neg(tr), neg(e1), neg(e2));

    // Fourth-order projection in tensor components, then mapped to the
    // engineering 3x3. Mixed term ratio (<e1> - <e2>)/(e1 - e2).
    // ramp selector for the mixed term; coincident eigenvalues are split by
    // a perturbation so the ratio degenerates to the Heaviside limit
    let ramp = |x: f64, positive: bool| if positive { x.max(0.0) } else { x.min(0.0) };
    let mixed_ratio = |positive: bool| {
        let (t1, t2) = if e1 - e2 < EIG_PERTURBATION {
            (e1 + EIG_PERTURBATION, e2)
        } else {
            (e1, e2)
        };
        (ramp(t1, positive) - ramp(t2, positive)) / (t1 - t2)
    };

    let tangent = |h_tr: f64, h1: f64, h2: f64, theta12: f64| -> [[f64; 3]; 3] {
        // C_ijkl = lambda h_tr d_ij d_kl
        //        + 2 mu [h1 M1 (x) M1 + h2 M2 (x) M2 + theta12 G12]
        // with G12,ijkl = sym(n1 (x) n2)_ij sym(n1 (x) n2)_kl * 2
        let m12 = [
            n1[0] * n2[0],
            n1[1] * n2[1],
            0.5 * (n1[0] * n2[1] + n1[1] * n2[0]),
        ];
        let mut cv = [[0.0; 3]; 3];
        let idx = [(0usize, 0usize), (1, 1), (0, 1)];
        for (r, &(i, j)) in idx.iter().enumerate() {
            for (col, &(k, l)) in idx.iter().enumerate() {
                let del = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
                let mut v = lambda * h_tr * del(i, j) * del(k, l);
                v += 2.0 * mu * h1 * v1[r] * v1[col];
                v += 2.0 * mu * h2 * v2[r] * v2[col];
                v += 2.0 * mu * theta12 * 2.0 * m12[r] * m12[col];
                cv[r][col] = v;
            }
        }
        // engineering shear column: d sigma / d gamma = d sigma / (2 d e_xy)
        // is already handled by using tensor components against [de_xx, de_yy,
        // 2 de_xy]: columns for gamma need no factor because C_1112 acts on
        // both e_12 and e_21.
        cv
    };
    let c_plus = tangent(heav(tr), heav(e1), heav(e2), mixed_ratio(true));
    let c_minus = tangent(1.0 - heav(tr), 1.0 - heav(e1), 1.0 - heav(e2), mixed_ratio(false));

    EnergySplit {
        psi_plus,
        psi_minus,
        sig_plus,
        sig_minus,
        c_plus,
        c_minus,
    }
}

/// Fatigue history at quadrature points: the accumulated variable and the
/// previous-step local fatigue variable.
#[derive(Debug, Clone, PartialEq)]
pub struct FatigueField {
    pub alpha_bar: Vec<f64>,
    pub alpha_prev: Vec<f64>,
}

impl FatigueField {
    pub fn zeros(n: usize) -> Self {
        FatigueField {
            alpha_bar: vec![0.0; n],
            alpha_prev: vec![0.0; n],
        }
    }

    /// Accumulate positive increments of the local fatigue variable:
    /// the discrete form of the loading-gated time integral.
    pub fn accumulate(&mut self, alpha_new: &[f64]) {
        debug_assert_eq!(alpha_new.len(), self.alpha_bar.len());
        for ((bar, prev), &new) in self
            .alpha_bar
            .iter_mut()
            .zip(self.alpha_prev.iter_mut())
            .zip(alpha_new)
        {
            *bar += (new - *prev).max(0.0);
            *prev = new;
        }
    }

    /// Track the reference value without accumulating (trial cycles).
    pub fn track_only(&mut self, alpha_new: &[f64]) {
        self.alpha_prev.copy_from_slice(alpha_new);
    }
}

/// History field: pointwise running maximum of psi_plus.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryField {
    pub h: Vec<f64>,
}

impl HistoryField {
    pub fn zeros(n: usize) -> Self {
        HistoryField { h: vec![0.0; n] }
    }

    pub fn update(&mut self, psi_plus: &[f64]) {
        debug_assert_eq!(psi_plus.len(), self.h.len());
        for (h, &p) in self.h.iter_mut().zip(psi_plus) {
            if p > *h {
                *h = p;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn mat(split: Split) -> Material {
        Material {
            e: 6000.0,
            nu: 0.22,
            gc: 2.28,
            ell: 0.2,
            g0: 1e-6,
            dissipation: Dissipation::At1,
            split,
            plane: Plane::Strain,
        }
    }

    #[test]
    fn degradation_values() {
        let (g, _) = degradation(0.0, 1e-6).unwrap();
        assert_relative_eq!(g, 1.0 + 1e-6);
        let (g, gp) = degradation(1.0, 1e-6).unwrap();
        assert_relative_eq!(g, 1e-6);
        assert_relative_eq!(gp, 0.0);
        let (g, gp) = degradation(0.5, 1e-6).unwrap();
        assert_relative_eq!(g, 0.250001);
        assert_relative_eq!(gp, -1.0);
    }

    #[test]
    fn degradation_domain() {
        assert!(degradation(-1e-10, 1e-6).is_ok());
        assert!(degradation(1.0 + 5e-10, 1e-6).is_ok());
        assert!(degradation(-1e-8, 1e-6).is_err());
        assert!(degradation(1.1, 1e-6).is_err());
    }

    #[test]
    fn dissipation_values() {
        assert_eq!(dissipation(0.3, Dissipation::At1).unwrap(), (0.3, 1.0, 8.0 / 3.0));
        assert_eq!(dissipation(0.0, Dissipation::At2).unwrap(), (0.0, 0.0, 2.0));
        assert_eq!(dissipation(0.5, Dissipation::At2).unwrap(), (0.25, 1.0, 2.0));
    }

    #[test]
    fn fatigue_degradation_branches() {
        let p = FatigueParams {
            alpha_th: 60.0,
            p_exp: 2.0,
        };
        assert_eq!(fatigue_degradation(30.0, &p), 1.0);
        assert_eq!(fatigue_degradation(60.0, &p), 1.0);
        // 3*ath, p=2: (1 - 2ath/4ath)^2 = 0.25
        assert_relative_eq!(fatigue_degradation(180.0, &p), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn hydrostatic_tension_has_no_inactive_part() {
        let m = mat(Split::Spectral);
        let s = split_energy([1e-3, 1e-3, 0.0], &m);
        assert_eq!(s.psi_minus, 0.0);
        assert!(s.psi_plus > 0.0);
    }

    #[test]
    fn hydrostatic_compression_partition() {
        let m = mat(Split::Spectral);
        let s = split_energy([-1e-3, -1e-3, 0.0], &m);
        let total = split_energy([-1e-3, -1e-3, 0.0], &mat(Split::None)).psi_plus;
        assert_relative_eq!(s.psi_plus + s.psi_minus, total, max_relative = 1e-12);
        assert!(s.psi_minus > 0.0);
    }

    #[test]
    fn no_split_is_total_energy() {
        let m = mat(Split::None);
        let s = split_energy([2e-3, -1e-3, 4e-4], &m);
        assert!(s.psi_plus > 0.0);
        assert_eq!(s.psi_minus, 0.0);
    }

    #[test]
    fn spectral_stress_matches_fd_of_energy() {
        let m = mat(Split::Spectral);
        let e0 = [3e-4, -2e-4, 5e-4];
        let s0 = split_energy(e0, &m);
        let step = 1e-8;
        for k in 0..3 {
            let mut ep = e0;
            let mut em = e0;
            ep[k] += step;
            em[k] -= step;
            let dpsi = (split_energy(ep, &m).psi_plus - split_energy(em, &m).psi_plus) / (2.0 * step);
            assert_relative_eq!(dpsi, s0.sig_plus[k], max_relative = 1e-5, epsilon = 1e-10);
        }
    }

    #[test]
    fn spectral_tangent_matches_fd_of_stress() {
        let m = mat(Split::Spectral);
        for e0 in [
            [3e-4, -2e-4, 5e-4],
            [-4e-4, -1e-4, 2e-4],
            [5e-4, 5e-4, 1e-7],
            [1e-4, 1e-4, 0.0], // coincident eigenvalues
        ] {
            let s0 = split_energy(e0, &m);
            let step = 1e-7;
            for k in 0..3 {
                let mut ep = e0;
                let mut em = e0;
                ep[k] += step;
                em[k] -= step;
                let sp = split_energy(ep, &m);
                let sm = split_energy(em, &m);
                for i in 0..3 {
                    let fd = (sp.sig_plus[i] - sm.sig_plus[i]) / (2.0 * step);
                    assert_relative_eq!(fd, s0.c_plus[i][k], max_relative = 2e-4, epsilon = 1e-8);
                    let fdm = (sp.sig_minus[i] - sm.sig_minus[i]) / (2.0 * step);
                    assert_relative_eq!(fdm, s0.c_minus[i][k], max_relative = 2e-4, epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn accumulate_gated_sequence() {
        let mut f = FatigueField::zeros(1);
        for a in [0.0, 2.0, 1.0, 3.0] {
            f.accumulate(&[a]);
        }
        assert_eq!(f.alpha_bar[0], 4.0);
    }

    #[test]
    fn accumulate_constant_and_monotone() {
        let mut f = FatigueField::zeros(1);
        f.accumulate(&[5.0]);
        let before = f.alpha_bar[0];
        f.accumulate(&[5.0]);
        assert_eq!(f.alpha_bar[0], before);

        let mut f = FatigueField::zeros(1);
        let delta = 0.3;
        for i in 1..=10 {
            f.accumulate(&[delta * i as f64]);
        }
        assert_relative_eq!(f.alpha_bar[0], 10.0 * delta, epsilon = 1e-12);
    }

    #[test]
    fn history_is_running_max() {
        let mut h = HistoryField::zeros(1);
        h.update(&[5.0]);
        h.update(&[3.0]);
        assert_eq!(h.h[0], 5.0);
        h.update(&[7.0]);
        assert_eq!(h.h[0], 7.0);
    }

    proptest! {
        #[test]
        fn f_non_increasing_and_continuous(
            alpha_th in 1e-3f64..1e3,
            p in 0.1f64..8.0,
            scale in 0.0f64..10.0,
        ) {
            let params = FatigueParams { alpha_th, p_exp: p };
            let a1 = scale * alpha_th;
            let a2 = a1 * 1.1 + 1e-9;
            prop_assert!(fatigue_degradation(a2, &params) <= fatigue_degradation(a1, &params) + 1e-15);
            // C0 at the threshold
            let below = fatigue_degradation(alpha_th * (1.0 - 1e-12), &params);
            let above = fatigue_degradation(alpha_th * (1.0 + 1e-12), &params);
            prop_assert!((below - above).abs() < 1e-9);
        }

        #[test]
        fn alpha_bar_non_decreasing(seq in proptest::collection::vec(0.0f64..100.0, 1..40)) {
            let mut f = FatigueField::zeros(1);
            let mut last = 0.0;
            for a in seq {
                f.accumulate(&[a]);
                prop_assert!(f.alpha_bar[0] >= last - 1e-15);
                last = f.alpha_bar[0];
            }
        }

        #[test]
        fn spectral_partition_of_energy(
            exx in -1e-3f64..1e-3,
            eyy in -1e-3f64..1e-3,
            gxy in -1e-3f64..1e-3,
        ) {
            let m = mat(Split::Spectral);
            let s = split_energy([exx, eyy, gxy], &m);
            let total = {
                let (lambda, mu) = m.lame();
                let tr = exx + eyy;
                let exy = 0.5 * gxy;
                0.5 * lambda * tr * tr + mu * (exx * exx + eyy * eyy + 2.0 * exy * exy)
            };
            prop_assert!((s.psi_plus + s.psi_minus - total).abs() <= 1e-12 * total.abs().max(1e-30));
        }

        #[test]
        fn undamaged_stress_is_hooke(
            exx in -1e-3f64..1e-3,
            eyy in -1e-3f64..1e-3,
            gxy in -1e-3f64..1e-3,
        ) {
            // split = None, d = 0: stress equals linear-elastic Hooke stress
            let m = mat(Split::None);
            let s = split_energy([exx, eyy, gxy], &m);
            let (g, _) = degradation(0.0, 0.0).unwrap(); // g0 = 0 for the exact comparison
            let stress = s.stress(g);
            let (lambda, mu) = m.lame();
            let tr = exx + eyy;
            let hooke = [lambda * tr + 2.0 * mu * exx, lambda * tr + 2.0 * mu * eyy, mu * gxy];
            for k in 0..3 {
                prop_assert!((stress[k] - hooke[k]).abs() <= 1e-12 * hooke[k].abs().max(1e-30));
            }
        }
    }
}
