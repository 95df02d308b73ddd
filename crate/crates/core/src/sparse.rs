//! Symmetric skyline storage with an LDL^T direct factorization.
//!
//! The meshes are structured, so after reverse Cuthill-McKee ordering the
//! stiffness profiles stay narrow and a profile (skyline) factorization is
//! both fast and bit-reproducible. The lower triangle is stored by rows:
//! row `i` holds the contiguous columns `first[i]..=i`.

use crate::error::{Error, Result};

/// Sparsity profile of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct Pattern {
    n: usize,
    first: Vec<usize>,
    row_ptr: Vec<usize>,
}

impl Pattern {
    /// Build the profile from dof cliques (one per element).
    pub fn from_cliques<'a>(n: usize, cliques: impl Iterator<Item = &'a [usize]>) -> Pattern {
        let mut first: Vec<usize> = (0..n).collect();
        for clique in cliques {
            let lo = clique.iter().copied().min().unwrap_or(0);
            for &i in clique {
                if lo < first[i] {
                    first[i] = lo;
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut acc = 0;
        for i in 0..n {
            row_ptr.push(acc);
            acc += i - first[i] + 1;
        }
        row_ptr.push(acc);
        Pattern { n, first, row_ptr }
    }

    pub fn nnz(&self) -> usize {
        self.row_ptr[self.n]
    }
}

/// Symmetric matrix in skyline storage (lower triangle by rows).
#[derive(Debug, Clone)]
pub struct SkylineMatrix {
    pattern: Pattern,
    vals: Vec<f64>,
    factored: bool,
}

impl SkylineMatrix {
    pub fn new(pattern: Pattern) -> SkylineMatrix {
        let nnz = pattern.nnz();
        SkylineMatrix {
            pattern,
            vals: vec![0.0; nnz],
            factored: false,
        }
    }

    pub fn n(&self) -> usize {
        self.pattern.n
    }

    pub fn zero(&mut self) {
        self.vals.fill(0.0);
        self.factored = false;
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j >= self.pattern.first[i] && j <= i);
        self.pattern.row_ptr[i] + (j - self.pattern.first[i])
    }

    /// Add `v` at (i, j); the symmetric counterpart is implicit.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let s = self.slot(r, c);
        self.vals[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if c < self.pattern.first[r] {
            0.0
        } else {
            self.vals[self.slot(r, c)]
        }
    }

    /// y = A x (for diagnostics and tests).
    pub fn multiply(&self, x: &[f64]) -> Vec<f64> {
        assert!(!self.factored, "matrix was overwritten by its factorization");
        let n = self.pattern.n;
        let mut y = vec![0.0; n];
        for i in 0..n {
            let lo = self.pattern.first[i];
            for j in lo..=i {
                let v = self.vals[self.slot(i, j)];
                y[i] += v * x[j];
                if i != j {
                    y[j] += v * x[i];
                }
            }
        }
        y
    }

    /// Constrain `dof` to `value`: move the column to the rhs, reduce the
    /// row and column to the identity, set rhs to the prescribed value.
    pub fn constrain(&mut self, rhs: &mut [f64], dof: usize, value: f64) {
        let n = self.pattern.n;
        let lo = self.pattern.first[dof];
        for j in lo..dof {
            let s = self.slot(dof, j);
            rhs[j] -= self.vals[s] * value;
            self.vals[s] = 0.0;
        }
        for i in dof + 1..n {
            if self.pattern.first[i] <= dof {
                let s = self.slot(i, dof);
                rhs[i] -= self.vals[s] * value;
                self.vals[s] = 0.0;
            }
        }
        let s = self.slot(dof, dof);
        self.vals[s] = 1.0;
        rhs[dof] = value;
    }

    /// In-place LDL^T. Unit lower factor in the off-diagonal slots, D on the
    /// diagonal.
    pub fn factor_ldlt(&mut self) -> Result<()> {
        let n = self.pattern.n;
        for i in 0..n {
            let fi = self.pattern.first[i];
            for j in fi..i {
                let fj = self.pattern.first[j];
                let lo = fi.max(fj);
                let mut sum = 0.0;
                for k in lo..j {
                    sum += self.vals[self.slot(i, k)] * self.vals[self.slot(j, k)] * self.vals[self.slot(k, k)];
                }
                let s = self.slot(i, j);
                let d = self.vals[self.slot(j, j)];
                if d == 0.0 || !d.is_finite() {
                    return Err(Error::SingularMatrix { pivot: j });
                }
                self.vals[s] = (self.vals[s] - sum) / d;
            }
            // D_ii = A_ii - sum L_ik^2 D_kk
            let mut sum = 0.0;
            for k in fi..i {
                let l = self.vals[self.slot(i, k)];
                sum += l * l * self.vals[self.slot(k, k)];
            }
            let s = self.slot(i, i);
            self.vals[s] -= sum;
            if self.vals[s] == 0.0 || !self.vals[s].is_finite() {
                return Err(Error::SingularMatrix { pivot: i });
            }
        }
        self.factored = true;
        Ok(())
    }

    /// Solve with an existing factorization.
    pub fn solve_factored(&self, rhs: &[f64]) -> Vec<f64> {
        assert!(self.factored, "factor_ldlt must run first");
        let n = self.pattern.n;
        let mut x = rhs.to_vec();
        // forward: L z = b
        for i in 0..n {
            let fi = self.pattern.first[i];
            let mut sum = 0.0;
            for k in fi..i {
                sum += self.vals[self.slot(i, k)] * x[k];
            }
            x[i] -= sum;
        }
        // diagonal
        for i in 0..n {
            x[i] /= self.vals[self.slot(i, i)];
        }
        // backward: L^T x = z
        for i in (0..n).rev() {
            let fi = self.pattern.first[i];
            let xi = x[i];
            for k in fi..i {
                x[k] -= self.vals[self.slot(i, k)] * xi;
            }
        }
        x
    }
}

/// Assembled linear sub-problem: matrix, right-hand side and Dirichlet data.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub matrix: SkylineMatrix,
    pub rhs: Vec<f64>,
    pub dirichlet: Vec<(usize, f64)>,
}

impl SparseSystem {
    /// Apply the constraints and solve. Conflicting double constraints are
    /// reported instead of silently keeping the last one.
    pub fn solve(mut self) -> Result<Vec<f64>> {
        self.apply_constraints()?;
        self.matrix.factor_ldlt()?;
        Ok(self.matrix.solve_factored(&self.rhs))
    }

    pub fn apply_constraints(&mut self) -> Result<()> {
        let mut sorted = self.dirichlet.clone();
        sorted.sort_by_key(|&(dof, _)| dof);
        for w in sorted.windows(2) {
            if w[0].0 == w[1].0 && (w[0].1 - w[1].1).abs() > 1e-12 {
                return Err(Error::InconsistentConstraints {
                    dof: w[0].0,
                    a: w[0].1,
                    b: w[1].1,
                });
            }
        }
        for &(dof, value) in &sorted {
            self.matrix.constrain(&mut self.rhs, dof, value);
        }
        Ok(())
    }
}

/// Reverse Cuthill-McKee ordering of an undirected graph given as element
/// cliques. Returns `position[old] = new`.
pub fn rcm_order(n: usize, cliques: &[Vec<usize>]) -> Vec<usize> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for clique in cliques {
        for (k, &a) in clique.iter().enumerate() {
            for &b in clique[k + 1..].iter() {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
    }
    for list in adj.iter_mut() {
        list.sort_unstable();
        list.dedup();
    }
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    loop {
        let start = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (adj[i].len(), i));
        let Some(start) = start else { break };
        visited[start] = true;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (adj[w].len(), w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    let mut position = vec![0; n];
    for (new, &old) in order.iter().enumerate() {
        position[old] = new;
    }
    position
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Dense Gaussian elimination oracle.
    fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a.to_vec();
        let mut x = b.to_vec();
        for k in 0..n {
            let piv = (k..n).max_by(|&i, &j| m[i][k].abs().partial_cmp(&m[j][k].abs()).unwrap()).unwrap();
            m.swap(k, piv);
            x.swap(k, piv);
            for i in k + 1..n {
                let f = m[i][k] / m[k][k];
                for j in k..n {
                    m[i][j] -= f * m[k][j];
                }
                x[i] -= f * x[k];
            }
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= m[i][j] * x[j];
            }
            x[i] = s / m[i][i];
        }
        x
    }

    fn random_spd(n: usize, band: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i.saturating_sub(band)..=i {
                let v: f64 = rng.gen_range(-1.0..1.0);
                a[i][j] = v;
                a[j][i] = v;
            }
            a[i][i] += 2.0 * band as f64 + 2.0;
        }
        a
    }

    #[test]
    fn skyline_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let n = 40;
            let band = 6;
            let a = random_spd(n, band, &mut rng);
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();

            let cliques: Vec<Vec<usize>> = (0..n)
                .map(|i| (i.saturating_sub(band)..=i).collect())
                .collect();
            let pattern = Pattern::from_cliques(n, cliques.iter().map(|c| c.as_slice()));
            let mut m = SkylineMatrix::new(pattern);
            for i in 0..n {
                for j in i.saturating_sub(band)..=i {
                    if a[i][j] != 0.0 {
                        m.add(i, j, a[i][j]);
                    }
                }
            }
            let expected = dense_solve(&a, &b);
            m.factor_ldlt().unwrap();
            let got = m.solve_factored(&b);
            for (g, e) in got.iter().zip(&expected) {
                assert!((g - e).abs() < 1e-10, "{g} vs {e}");
            }
        }
    }

    #[test]
    fn constrained_rows_become_identity() {
        let pattern = Pattern::from_cliques(3, [vec![0usize, 1, 2]].iter().map(|c| c.as_slice()));
        let mut m = SkylineMatrix::new(pattern);
        for i in 0..3 {
            for j in 0..=i {
                m.add(i, j, if i == j { 4.0 } else { 1.0 });
            }
        }
        let mut sys = SparseSystem {
            matrix: m,
            rhs: vec![1.0, 2.0, 3.0],
            dirichlet: vec![(1, 5.0)],
        };
        sys.apply_constraints().unwrap();
        assert_eq!(sys.matrix.get(1, 1), 1.0);
        assert_eq!(sys.matrix.get(1, 0), 0.0);
        assert_eq!(sys.matrix.get(2, 1), 0.0);
        assert_eq!(sys.rhs[1], 5.0);
        // moved column: rhs_0 = 1 - 1*5, rhs_2 = 3 - 1*5
        assert_eq!(sys.rhs[0], -4.0);
        assert_eq!(sys.rhs[2], -2.0);
        let x = sys.solve().unwrap();
        assert!((x[1] - 5.0).abs() < 1e-14);
    }

    #[test]
    fn conflicting_constraints_error() {
        let pattern = Pattern::from_cliques(2, [vec![0usize, 1]].iter().map(|c| c.as_slice()));
        let mut m = SkylineMatrix::new(pattern);
        m.add(0, 0, 1.0);
        m.add(1, 1, 1.0);
        let sys = SparseSystem {
            matrix: m,
            rhs: vec![0.0, 0.0],
            dirichlet: vec![(0, 1.0), (0, 2.0)],
        };
        assert!(matches!(sys.solve(), Err(Error::InconsistentConstraints { .. })));
    }

    #[test]
    fn singular_matrix_reported() {
        let pattern = Pattern::from_cliques(2, [vec![0usize, 1]].iter().map(|c| c.as_slice()));
        let mut m = SkylineMatrix::new(pattern);
        m.add(0, 0, 1.0);
        // row 1 left zero
        assert!(matches!(m.factor_ldlt(), Err(Error::SingularMatrix { pivot: 1 })));
    }

    #[test]
    fn rcm_is_a_permutation_and_narrows_profile() {
        // 1D chain numbered badly: 0-5-1-6-2-... style cliques
        let n = 12;
        let cliques: Vec<Vec<usize>> = (0..n - 1).map(|i| vec![i, (i + 5) % n]).collect();
        let pos = rcm_order(n, &cliques);
        let mut seen = vec![false; n];
        for &p in &pos {
            assert!(!seen[p]);
            seen[p] = true;
        }
    }
}
