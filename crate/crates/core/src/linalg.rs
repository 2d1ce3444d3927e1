//! Banded direct solvers for the assembled FEM systems.
//!
//! The structured crossed-triangle meshes produced by [`crate::mesh`] have a
//! small, known bandwidth, so banded factorizations are the natural direct
//! method at this scale: an LDL^T factorization for the symmetric mechanics
//! tangent and an LU factorization with partial pivoting for the
//! nonsymmetric heat tangent. Both are deterministic and allocation-stable,
//! which the serial reproducibility contract of the CLI relies on.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is numerically singular at pivot {index} (value {value:.3e})")]
    SingularPivot { index: usize, value: f64 },
    #[error("dimension mismatch: matrix order {n}, vector length {len}")]
    DimensionMismatch { n: usize, len: usize },
}

/// Symmetric banded matrix, lower band stored row-wise.
///
/// Entry `(i, j)` with `j <= i`, `i - j <= hbw` lives at
/// `data[i * (hbw + 1) + (i - j)]`.
#[derive(Debug, Clone)]
pub struct SymBandMatrix {
    n: usize,
    hbw: usize,
    data: Vec<f64>,
}

impl SymBandMatrix {
    pub fn zeros(n: usize, hbw: usize) -> Self {
        SymBandMatrix { n, hbw, data: vec![0.0; n * (hbw + 1)] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn reset(&mut self) {
        self.data.fill(0.0);
    }

    /// Adds `v` to entry `(i, j)`. Only the lower triangle is stored; calls
    /// with `j > i` are ignored so assembly loops can visit both triangles.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        if j > i {
            return;
        }
        debug_assert!(i - j <= self.hbw, "entry ({i},{j}) outside band {}", self.hbw);
        self.data[i * (self.hbw + 1) + (i - j)] += v;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if j > i { (j, i) } else { (i, j) };
        if r - c > self.hbw {
            0.0
        } else {
            self.data[r * (self.hbw + 1) + (r - c)]
        }
    }

    /// In-place LDL^T factorization. Fails on a zero or sign-degenerate
    /// pivot far below the matrix scale.
    pub fn factorize(mut self) -> Result<SymBandFactor, LinalgError> {
        let n = self.n;
        let hbw = self.hbw;
        let scale = (0..n).map(|i| self.get(i, i).abs()).fold(0.0f64, f64::max).max(1.0);
        for j in 0..n {
            let lo = j.saturating_sub(hbw);
            let mut d = self.get(j, j);
            for k in lo..j {
                let ljk = self.get(j, k);
                let dk = self.data[k * (hbw + 1)];
                d -= ljk * ljk * dk;
            }
            if d.abs() <= 1e-300 || d.abs() < 1e-14 * scale * 1e-4 {
                return Err(LinalgError::SingularPivot { index: j, value: d });
            }
            self.data[j * (hbw + 1)] = d;
            let hi = (j + hbw + 1).min(n);
            for i in (j + 1)..hi {
                let mut v = self.get(i, j);
                let klo = lo.max(i.saturating_sub(hbw));
                for k in klo..j {
                    v -= self.get(i, k) * self.get(j, k) * self.data[k * (hbw + 1)];
                }
                self.data[i * (hbw + 1) + (i - j)] = v / d;
            }
        }
        Ok(SymBandFactor { n, hbw, data: self.data })
    }
}

/// LDL^T factor of a [`SymBandMatrix`].
#[derive(Debug, Clone)]
pub struct SymBandFactor {
    n: usize,
    hbw: usize,
    data: Vec<f64>,
}

impl SymBandFactor {
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if b.len() != self.n {
            return Err(LinalgError::DimensionMismatch { n: self.n, len: b.len() });
        }
        let hbw = self.hbw;
        let mut x = b.to_vec();
        // forward: L y = b
        for i in 0..self.n {
            let lo = i.saturating_sub(hbw);
            let mut v = x[i];
            for k in lo..i {
                v -= self.data[i * (hbw + 1) + (i - k)] * x[k];
            }
            x[i] = v;
        }
        // diagonal
        for i in 0..self.n {
            x[i] /= self.data[i * (hbw + 1)];
        }
        // backward: L^T x = y
        for i in (0..self.n).rev() {
            let hi = (i + hbw + 1).min(self.n);
            let mut v = x[i];
            for k in (i + 1)..hi {
                v -= self.data[k * (hbw + 1) + (k - i)] * x[k];
            }
            x[i] = v;
        }
        Ok(x)
    }
}

/// General banded matrix with lower bandwidth `kl` and upper bandwidth `ku`,
/// stored column-major LAPACK-style with `kl` extra superdiagonals for
/// pivoting fill.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        BandMatrix { n, kl, ku, ldab, data: vec![0.0; n * ldab] }
    }

    pub fn reset(&mut self) {
        self.data.fill(0.0);
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        // row i, column j; valid for j - ku - kl <= i <= j + kl
        j * self.ldab + (self.kl + self.ku + i) - j
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(
            (j as isize - i as isize) <= self.ku as isize
                && (i as isize - j as isize) <= self.kl as isize,
            "entry ({i},{j}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = j.saturating_sub(self.ku + self.kl);
        let hi = (j + self.kl).min(self.n - 1);
        if i < lo || i > hi {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// LU factorization with partial pivoting (banded `getrf`).
    pub fn factorize(mut self) -> Result<BandFactor, LinalgError> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let mut ipiv = vec![0usize; n];
        for j in 0..n {
            let hi = (j + kl).min(n - 1);
            let mut p = j;
            let mut pmax = self.get(j, j).abs();
            for i in (j + 1)..=hi {
                let v = self.get(i, j).abs();
                if v > pmax {
                    pmax = v;
                    p = i;
                }
            }
            if pmax <= 1e-300 {
                return Err(LinalgError::SingularPivot { index: j, value: pmax });
            }
            ipiv[j] = p;
            let chi = (j + ku + kl).min(n - 1);
            if p != j {
                for c in j..=chi {
                    let a = self.idx(j, c);
                    let b = self.idx(p, c);
                    self.data.swap(a, b);
                }
            }
            let piv = self.get(j, j);
            for i in (j + 1)..=hi {
                let m = self.get(i, j) / piv;
                let k = self.idx(i, j);
                self.data[k] = m;
                if m != 0.0 {
                    for c in (j + 1)..=chi {
                        let ajc = self.data[self.idx(j, c)];
                        if ajc != 0.0 {
                            let k = self.idx(i, c);
                            self.data[k] -= m * ajc;
                        }
                    }
                }
            }
        }
        Ok(BandFactor { n, kl, ku, ldab: self.ldab, data: self.data, ipiv })
    }
}

/// LU factor of a [`BandMatrix`].
#[derive(Debug, Clone)]
pub struct BandFactor {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    data: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandFactor {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.ldab + (self.kl + self.ku + i) - j
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if b.len() != self.n {
            return Err(LinalgError::DimensionMismatch { n: self.n, len: b.len() });
        }
        let n = self.n;
        let mut x = b.to_vec();
        // P and L
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                x.swap(j, p);
            }
            let hi = (j + self.kl).min(n - 1);
            let xj = x[j];
            if xj != 0.0 {
                for i in (j + 1)..=hi {
                    x[i] -= self.data[self.idx(i, j)] * xj;
                }
            }
        }
        // U
        for j in (0..n).rev() {
            let mut v = x[j];
            let chi = (j + self.ku + self.kl).min(n - 1);
            for c in (j + 1)..=chi {
                v -= self.data[self.idx(j, c)] * x[c];
            }
            x[j] = v / self.data[self.idx(j, j)];
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Dense Gaussian elimination with partial pivoting: the oracle the
    /// banded solvers are checked against.
    fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a.iter().map(|r| r.clone()).collect();
        let mut x = b.to_vec();
        for j in 0..n {
            let p = (j..n).max_by(|&r, &s| m[r][j].abs().total_cmp(&m[s][j].abs())).unwrap();
            m.swap(j, p);
            x.swap(j, p);
            for i in (j + 1)..n {
                let f = m[i][j] / m[j][j];
                for c in j..n {
                    m[i][c] -= f * m[j][c];
                }
                x[i] -= f * x[j];
            }
        }
        for j in (0..n).rev() {
            for c in (j + 1)..n {
                x[j] -= m[j][c] * x[c];
            }
            x[j] /= m[j][j];
        }
        x
    }

    fn random_banded(rng: &mut ChaCha8Rng, n: usize, hbw: usize, spd: bool) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0f64; n]; n];
        for i in 0..n {
            for j in i.saturating_sub(hbw)..=(i + hbw).min(n - 1) {
                if spd && j > i {
                    continue;
                }
                a[i][j] = rng.gen_range(-1.0..1.0);
            }
        }
        if spd {
            for i in 0..n {
                for j in 0..i {
                    a[j][i] = a[i][j];
                }
            }
            for (i, row) in a.iter_mut().enumerate() {
                row[i] = 2.0 * (hbw as f64) + 1.0 + row[i].abs();
            }
        }
        a
    }

    #[test]
    fn ldlt_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(n, hbw) in &[(1usize, 0usize), (5, 1), (40, 3), (120, 9)] {
            let a = random_banded(&mut rng, n, hbw, true);
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut band = SymBandMatrix::zeros(n, hbw);
            for i in 0..n {
                for j in 0..=i {
                    if a[i][j] != 0.0 {
                        band.add(i, j, a[i][j]);
                    }
                }
            }
            let x = band.factorize().unwrap().solve(&b).unwrap();
            let xd = dense_solve(&a, &b);
            for i in 0..n {
                assert!((x[i] - xd[i]).abs() < 1e-10, "n={n} i={i}: {} vs {}", x[i], xd[i]);
            }
        }
    }

    #[test]
    fn lu_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(n, hbw) in &[(1usize, 0usize), (6, 2), (50, 4), (130, 7)] {
            let mut a = random_banded(&mut rng, n, hbw, false);
            // keep it comfortably nonsingular without symmetry
            for (i, row) in a.iter_mut().enumerate() {
                row[i] += if i % 2 == 0 { 3.0 } else { -3.0 } * (hbw as f64 + 1.0);
            }
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut band = BandMatrix::zeros(n, hbw, hbw);
            for i in 0..n {
                for j in i.saturating_sub(hbw)..=(i + hbw).min(n - 1) {
                    if a[i][j] != 0.0 {
                        band.add(i, j, a[i][j]);
                    }
                }
            }
            let x = band.factorize().unwrap().solve(&b).unwrap();
            let xd = dense_solve(&a, &b);
            for i in 0..n {
                assert!((x[i] - xd[i]).abs() < 1e-9, "n={n} i={i}: {} vs {}", x[i], xd[i]);
            }
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let band = SymBandMatrix::zeros(3, 1);
        assert!(matches!(band.factorize(), Err(LinalgError::SingularPivot { .. })));
        let band = BandMatrix::zeros(3, 1, 1);
        assert!(matches!(band.factorize(), Err(LinalgError::SingularPivot { .. })));
    }

    #[test]
    fn lu_handles_pivoting() {
        // matrix that requires row exchange: zero on the first diagonal entry
        let mut band = BandMatrix::zeros(2, 1, 1);
        band.add(0, 1, 1.0);
        band.add(1, 0, 1.0);
        band.add(1, 1, 1e-8);
        let x = band.factorize().unwrap().solve(&[2.0, 3.0]).unwrap();
        // [[0,1],[1,1e-8]] x = [2,3]
        assert!((x[1] - 2.0).abs() < 1e-12);
        assert!((x[0] - (3.0 - 2e-8)).abs() < 1e-12);
    }
}
