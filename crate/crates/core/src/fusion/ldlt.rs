//! Bunch–Kaufman factorization `P A Pᵀ = L D Lᵀ` for small dense symmetric
//! matrices, with `D` block diagonal in 1×1 and 2×2 blocks.

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Square {
    n: usize,
    data: Vec<f64>,
}

impl Square {
    pub(crate) fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub(crate) fn from_row_major(n: usize, data: &[f64]) -> Self {
        debug_assert_eq!(data.len(), n * n);
        Self {
            n,
            data: data.to_vec(),
        }
    }

    pub(crate) fn size(&self) -> usize {
        self.n
    }

    pub(crate) fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub(crate) fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub(crate) fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    /// Maximum absolute column sum.
    pub(crate) fn norm_one(&self) -> f64 {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self.get(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    fn swap_symmetric(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.n {
            self.data.swap(a * self.n + j, b * self.n + j);
        }
        for i in 0..self.n {
            self.data.swap(i * self.n + a, i * self.n + b);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Pivot {
    One(f64),
    /// Symmetric 2×2 block `[[a, b], [b, c]]`.
    Two { a: f64, b: f64, c: f64 },
}

#[derive(Debug, Clone)]
pub(crate) struct SymmetricIndefinite {
    n: usize,
    /// Unit lower triangular factor.
    l: Square,
    /// Pivot blocks in order, each tagged with its first row.
    blocks: Vec<(usize, Pivot)>,
    /// Row `i` of the permuted matrix is row `perm[i]` of the original.
    perm: Vec<usize>,
}

/// Growth-bounding constant `(1 + √17) / 8`.
const ALPHA: f64 = 0.640_388_203_202_208_4;

impl SymmetricIndefinite {
    /// Factors `a`; `None` if a zero pivot column is met (exactly singular).
    pub(crate) fn factor(a: &Square) -> Option<Self> {
        let n = a.size();
        let mut work = a.clone();
        let mut l = Square::zeros(n);
        for i in 0..n {
            l.set(i, i, 1.0);
        }
        let mut perm: Vec<usize> = (0..n).collect();
        let mut blocks = Vec::new();
        let mut k = 0;
        while k < n {
            let akk = work.get(k, k).abs();
            let (imax, colmax) = ((k + 1)..n)
                .map(|i| (i, work.get(i, k).abs()))
                .fold((k, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if akk.max(colmax) == 0.0 {
                return None;
            }
            let (pivot_row, step) = if akk >= ALPHA * colmax {
                (k, 1)
            } else {
                let rowmax = (k..n)
                    .filter(|&j| j != imax)
                    .map(|j| work.get(imax, j).abs())
                    .fold(0.0, f64::max);
                if akk * rowmax >= ALPHA * colmax * colmax {
                    (k, 1)
                } else if work.get(imax, imax).abs() >= ALPHA * rowmax {
                    (imax, 1)
                } else {
                    (imax, 2)
                }
            };
            let target = k + step - 1;
            if pivot_row != target {
                work.swap_symmetric(target, pivot_row);
                perm.swap(target, pivot_row);
                for j in 0..k {
                    let (x, y) = (l.get(target, j), l.get(pivot_row, j));
                    l.set(target, j, y);
                    l.set(pivot_row, j, x);
                }
            }
            if step == 1 {
                let d = work.get(k, k);
                if d == 0.0 {
                    return None;
                }
                for i in (k + 1)..n {
                    l.set(i, k, work.get(i, k) / d);
                }
                for i in (k + 1)..n {
                    for j in (k + 1)..n {
                        let v = work.get(i, j) - l.get(i, k) * work.get(j, k);
                        work.set(i, j, v);
                    }
                }
                blocks.push((k, Pivot::One(d)));
            } else {
                let (a11, a21, a22) = (work.get(k, k), work.get(k + 1, k), work.get(k + 1, k + 1));
                let det = a11 * a22 - a21 * a21;
                if det == 0.0 {
                    return None;
                }
                for i in (k + 2)..n {
                    let (x1, x2) = (work.get(i, k), work.get(i, k + 1));
                    l.set(i, k, (x1 * a22 - x2 * a21) / det);
                    l.set(i, k + 1, (x2 * a11 - x1 * a21) / det);
                }
                for i in (k + 2)..n {
                    for j in (k + 2)..n {
                        let v = work.get(i, j)
                            - l.get(i, k) * work.get(j, k)
                            - l.get(i, k + 1) * work.get(j, k + 1);
                        work.set(i, j, v);
                    }
                }
                blocks.push((
                    k,
                    Pivot::Two {
                        a: a11,
                        b: a21,
                        c: a22,
                    },
                ));
            }
            k += step;
        }
        Some(Self { n, l, blocks, perm })
    }

    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.l.get(i, j) * y[j]).sum();
            y[i] -= s;
        }
        for &(k, pivot) in &self.blocks {
            match pivot {
                Pivot::One(d) => y[k] /= d,
                Pivot::Two { a, b, c } => {
                    let det = a * c - b * b;
                    let (u, v) = (y[k], y[k + 1]);
                    y[k] = (c * u - b * v) / det;
                    y[k + 1] = (a * v - b * u) / det;
                }
            }
        }
        for i in (0..n).rev() {
            let s: f64 = ((i + 1)..n).map(|j| self.l.get(j, i) * y[j]).sum();
            y[i] -= s;
        }
        let mut x = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        x
    }

    /// Numbers of positive and negative eigenvalues (Sylvester's law of inertia).
    pub(crate) fn inertia(&self) -> (usize, usize) {
        let mut pos = 0;
        let mut neg = 0;
        for &(_, pivot) in &self.blocks {
            match pivot {
                Pivot::One(d) if d > 0.0 => pos += 1,
                Pivot::One(_) => neg += 1,
                Pivot::Two { a, b, c } => {
                    if a * c - b * b < 0.0 {
                        pos += 1;
                        neg += 1;
                    } else if a + c > 0.0 {
                        pos += 2;
                    } else {
                        neg += 2;
                    }
                }
            }
        }
        (pos, neg)
    }

    /// `‖A‖₁ ‖A⁻¹‖₁`, with the inverse formed column by column.
    pub(crate) fn condition_one(&self, a: &Square) -> f64 {
        let mut inv_norm: f64 = 0.0;
        let mut e = vec![0.0; self.n];
        for j in 0..self.n {
            e[j] = 1.0;
            let col = self.solve(&e);
            e[j] = 0.0;
            inv_norm = inv_norm.max(col.iter().map(|x| x.abs()).sum());
        }
        a.norm_one() * inv_norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(a: &Square, x: &[f64], b: &[f64]) -> f64 {
        a.mul_vec(x)
            .iter()
            .zip(b)
            .map(|(ax, bi)| (ax - bi).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn solves_saddle_point_system() {
        // [[2, 0, 1], [0, 4, 1], [1, 1, 0]] forces a 2x2 or off-diagonal pivot.
        let a = Square::from_row_major(3, &[2.0, 0.0, 1.0, 0.0, 4.0, 1.0, 1.0, 1.0, 0.0]);
        let f = SymmetricIndefinite::factor(&a).unwrap();
        let b = [0.0, 0.0, 1.0];
        let x = f.solve(&b);
        assert!(residual(&a, &x, &b) < 1e-14);
        assert!((x[0] - 2.0 / 3.0).abs() < 1e-14 && (x[1] - 1.0 / 3.0).abs() < 1e-14);
        assert_eq!(f.inertia(), (2, 1));
    }

    #[test]
    fn zero_diagonal_needs_two_by_two_pivot() {
        let a = Square::from_row_major(2, &[0.0, 1.0, 1.0, 0.0]);
        let f = SymmetricIndefinite::factor(&a).unwrap();
        assert!(matches!(f.blocks[0].1, Pivot::Two { .. }));
        let x = f.solve(&[3.0, 5.0]);
        assert_eq!(x, vec![5.0, 3.0]);
        assert_eq!(f.inertia(), (1, 1));
    }

    #[test]
    fn singular_matrix_detected() {
        let a = Square::from_row_major(2, &[0.0, 0.0, 0.0, 1.0]);
        assert!(SymmetricIndefinite::factor(&a).is_none());
        let b = Square::from_row_major(2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(SymmetricIndefinite::factor(&b).is_none());
    }

    #[test]
    fn random_symmetric_systems() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for n in 1..9 {
            let mut a = Square::zeros(n);
            for i in 0..n {
                for j in 0..=i {
                    let v: f64 = rng.random_range(-1.0..1.0);
                    a.set(i, j, v);
                    a.set(j, i, v);
                }
            }
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let f = SymmetricIndefinite::factor(&a).unwrap();
            let x = f.solve(&b);
            let cond = f.condition_one(&a);
            assert!(residual(&a, &x, &b) < 1e-13 * cond.max(1.0), "n={n}");
            let (p, q) = f.inertia();
            assert_eq!(p + q, n);
        }
    }
}
