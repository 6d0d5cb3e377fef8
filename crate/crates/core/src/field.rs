//! Rectangular grids and grid-sampled scalar fields, plus the discrete
//! calculus everything else is built on: weighted norms, inner product,
//! Dirichlet Laplacian, boundary distance, cutoff blending, and Gaussian
//! mollification.
//!
//! Conventions. Only interior nodes are stored; the homogeneous Dirichlet
//! boundary value is implicit (stencils read zero ghosts). Nodes along each
//! axis sit at `x_i = i * h` for `i = 1..=n` with `h = length / (n + 1)`.
//! In 2d, values are stored row-major with x fastest:
//! `values[(iy - 1) * n + (ix - 1)]` holds the node at `(ix * hx, iy * hy)`.
//!
//! Integrals use the h^d-weighted rectangle rule over interior nodes, which
//! makes discrete sine orthogonality exact. The H1 seminorm uses forward
//! differences including the boundary faces, so `h10_norm` controls the full
//! discrete gradient energy.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::scalar::{real, to_f64, Real};

/// Uniform interior grid on a 1d interval or a 2d rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid<T> {
    dim: usize,
    n: usize,
    lengths: [T; 2],
    h: [T; 2],
}

impl<T: Real> Grid<T> {
    /// Builds a grid with `n` interior points per axis.
    pub fn new(dim: usize, n: usize, lengths: &[T]) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidDim(dim));
        }
        if n < 3 {
            return Err(Error::TooFewPoints(n));
        }
        if lengths.len() != dim {
            return Err(Error::LengthCountMismatch {
                expected: dim,
                got: lengths.len(),
            });
        }
        let mut ls = [T::one(); 2];
        let mut hs = [T::one(); 2];
        let denom = real::<T>((n + 1) as f64);
        for (a, &len) in lengths.iter().enumerate() {
            if !(len.is_finite() && len > T::zero()) {
                return Err(Error::NonpositiveLength(to_f64(len)));
            }
            ls[a] = len;
            hs[a] = len / denom;
        }
        if dim == 1 {
            ls[1] = ls[0];
            hs[1] = hs[0];
        }
        Ok(Grid {
            dim,
            n,
            lengths: ls,
            h: hs,
        })
    }

    pub fn new_1d(n: usize, length: T) -> Result<Self> {
        Self::new(1, n, &[length])
    }

    pub fn new_2d(n: usize, lengths: [T; 2]) -> Result<Self> {
        Self::new(2, n, &lengths)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Interior points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self, axis: usize) -> T {
        self.lengths[axis]
    }

    pub fn spacing(&self, axis: usize) -> T {
        self.h[axis]
    }

    pub fn min_length(&self) -> T {
        if self.dim == 1 {
            self.lengths[0]
        } else {
            self.lengths[0].min(self.lengths[1])
        }
    }

    /// Total number of interior nodes.
    pub fn node_count(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Quadrature weight of one node: h in 1d, hx*hy in 2d.
    pub fn cell_weight(&self) -> T {
        if self.dim == 1 {
            self.h[0]
        } else {
            self.h[0] * self.h[1]
        }
    }

    /// Coordinates of the node with linear index `idx`; `y` is 0 in 1d.
    pub fn coords(&self, idx: usize) -> [T; 2] {
        if self.dim == 1 {
            [real::<T>((idx + 1) as f64) * self.h[0], T::zero()]
        } else {
            let ix = idx % self.n;
            let iy = idx / self.n;
            [
                real::<T>((ix + 1) as f64) * self.h[0],
                real::<T>((iy + 1) as f64) * self.h[1],
            ]
        }
    }

    /// Distance from each node to the nearest boundary face.
    pub fn boundary_distance(&self) -> ScalarField<T> {
        let mut values = Vec::with_capacity(self.node_count());
        for idx in 0..self.node_count() {
            let c = self.coords(idx);
            let mut d = c[0].min(self.lengths[0] - c[0]);
            if self.dim == 2 {
                d = d.min(c[1]).min(self.lengths[1] - c[1]);
            }
            values.push(d);
        }
        ScalarField {
            grid: *self,
            values,
        }
    }

    /// C2 interior cutoff: 1 where the boundary distance is at least `eta`,
    /// 0 where it is at most `eta / 2`, quintic smoothstep between.
    pub fn cutoff(&self, eta: T) -> Result<ScalarField<T>> {
        let max = self.min_length() / real::<T>(2.0);
        if !(eta > T::zero() && eta < max) {
            return Err(Error::EtaOutOfRange {
                eta: to_f64(eta),
                max: to_f64(max),
            });
        }
        let half = eta / real::<T>(2.0);
        let mut chi = self.boundary_distance();
        for v in chi.values.iter_mut() {
            let d = *v;
            *v = if d >= eta {
                T::one()
            } else if d <= half {
                T::zero()
            } else {
                let s = (d - half) / half;
                // s^3 (6 s^2 - 15 s + 10): C2 match at both ends.
                s * s
                    * s
                    * (real::<T>(6.0) * s * s - real::<T>(15.0) * s + real::<T>(10.0))
            };
        }
        Ok(chi)
    }
}

/// Scalar samples on the interior nodes of a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<T> {
    grid: Grid<T>,
    values: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn zeros(grid: Grid<T>) -> Self {
        ScalarField {
            grid,
            values: vec![T::zero(); grid.node_count()],
        }
    }

    pub fn constant(grid: Grid<T>, c: T) -> Self {
        ScalarField {
            grid,
            values: vec![c; grid.node_count()],
        }
    }

    /// Wraps raw node values after checking the count and finiteness.
    pub fn from_values(grid: Grid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::ValueCountMismatch {
                expected: grid.node_count(),
                got: values.len(),
            });
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonfiniteValue { index: i });
            }
        }
        Ok(ScalarField { grid, values })
    }

    /// Samples `f(x, y)` at every node (`y = 0` in 1d).
    pub fn sample(grid: Grid<T>, f: impl Fn(T, T) -> T) -> Self {
        let values = (0..grid.node_count())
            .map(|i| {
                let c = grid.coords(i);
                f(c[0], c[1])
            })
            .collect();
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn min_value(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_value(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// h^d-weighted L2 norm over interior nodes.
    pub fn l2_norm(&self) -> T {
        let s: T = self.values.iter().map(|&v| v * v).sum();
        (self.grid.cell_weight() * s).sqrt()
    }

    /// Max-abs over interior nodes.
    pub fn linf_norm(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    /// h^d-weighted inner product; errors if the grids differ.
    pub fn inner(&self, other: &Self) -> Result<T> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let s: T = self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(&a, &b)| a * b)
            .sum();
        Ok(self.grid.cell_weight() * s)
    }

    /// Central-difference Dirichlet Laplacian; ghost nodes read as zero.
    pub fn laplacian(&self) -> Self {
        let g = &self.grid;
        let n = g.n;
        let mut out = vec![T::zero(); self.values.len()];
        if g.dim == 1 {
            let inv_h2 = T::one() / (g.h[0] * g.h[0]);
            for i in 0..n {
                let left = if i > 0 { self.values[i - 1] } else { T::zero() };
                let right = if i + 1 < n {
                    self.values[i + 1]
                } else {
                    T::zero()
                };
                out[i] = (left - real::<T>(2.0) * self.values[i] + right) * inv_h2;
            }
        } else {
            let inv_hx2 = T::one() / (g.h[0] * g.h[0]);
            let inv_hy2 = T::one() / (g.h[1] * g.h[1]);
            for iy in 0..n {
                for ix in 0..n {
                    let idx = iy * n + ix;
                    let v = self.values[idx];
                    let l = if ix > 0 { self.values[idx - 1] } else { T::zero() };
                    let r = if ix + 1 < n {
                        self.values[idx + 1]
                    } else {
                        T::zero()
                    };
                    let d = if iy > 0 { self.values[idx - n] } else { T::zero() };
                    let u = if iy + 1 < n {
                        self.values[idx + n]
                    } else {
                        T::zero()
                    };
                    out[idx] = (l - real::<T>(2.0) * v + r) * inv_hx2
                        + (d - real::<T>(2.0) * v + u) * inv_hy2;
                }
            }
        }
        ScalarField {
            grid: self.grid,
            values: out,
        }
    }

    /// Discrete H1 norm: sqrt(l2^2 + forward-difference gradient energy),
    /// boundary faces included so the Dirichlet jump is counted.
    pub fn h10_norm(&self) -> T {
        let g = &self.grid;
        let n = g.n;
        let w = g.cell_weight();
        let mut grad = T::zero();
        if g.dim == 1 {
            let inv_h = T::one() / g.h[0];
            for face in 0..=n {
                let a = if face > 0 { self.values[face - 1] } else { T::zero() };
                let b = if face < n { self.values[face] } else { T::zero() };
                let d = (b - a) * inv_h;
                grad += w * d * d;
            }
        } else {
            let inv_hx = T::one() / g.h[0];
            let inv_hy = T::one() / g.h[1];
            for iy in 0..n {
                for face in 0..=n {
                    let a = if face > 0 {
                        self.values[iy * n + face - 1]
                    } else {
                        T::zero()
                    };
                    let b = if face < n { self.values[iy * n + face] } else { T::zero() };
                    let d = (b - a) * inv_hx;
                    grad += w * d * d;
                }
            }
            for ix in 0..n {
                for face in 0..=n {
                    let a = if face > 0 {
                        self.values[(face - 1) * n + ix]
                    } else {
                        T::zero()
                    };
                    let b = if face < n { self.values[face * n + ix] } else { T::zero() };
                    let d = (b - a) * inv_hy;
                    grad += w * d * d;
                }
            }
        }
        let l2 = self.l2_norm();
        (l2 * l2 + grad).sqrt()
    }

    /// Truncated, renormalized Gaussian smoothing with width `sigma` in
    /// domain units. `sigma = 0` is the identity; the kernel is cut at
    /// `4 sigma` and the field is extended by zero past the boundary.
    pub fn mollify(&self, sigma: T) -> Result<Self> {
        if sigma < T::zero() {
            return Err(Error::NegativeSigma(to_f64(sigma)));
        }
        if sigma == T::zero() {
            return Ok(self.clone());
        }
        let mut out = self.clone();
        for axis in 0..self.grid.dim {
            let kernel = gaussian_kernel(sigma, self.grid.h[axis]);
            if kernel.len() > 1 {
                out = out.convolve_axis(axis, &kernel);
            }
        }
        Ok(out)
    }

    fn convolve_axis(&self, axis: usize, kernel: &[T]) -> Self {
        let n = self.grid.n;
        let r = (kernel.len() - 1) / 2;
        let mut out = vec![T::zero(); self.values.len()];
        let lines: usize = if self.grid.dim == 1 { 1 } else { n };
        for line in 0..lines {
            for i in 0..n {
                let mut acc = T::zero();
                for (j, &wk) in kernel.iter().enumerate() {
                    let off = j as isize - r as isize;
                    let src = i as isize + off;
                    if src < 0 || src >= n as isize {
                        continue; // zero extension past the boundary
                    }
                    let idx = match (self.grid.dim, axis) {
                        (1, _) => src as usize,
                        (2, 0) => line * n + src as usize,
                        (2, 1) => (src as usize) * n + line,
                        _ => unreachable!(),
                    };
                    acc += wk * self.values[idx];
                }
                let dst = match (self.grid.dim, axis) {
                    (1, _) => i,
                    (2, 0) => line * n + i,
                    (2, 1) => i * n + line,
                    _ => unreachable!(),
                };
                out[dst] = acc;
            }
        }
        ScalarField {
            grid: self.grid,
            values: out,
        }
    }

    pub fn scaled(&self, c: T) -> Self {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| v * c).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        ScalarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(other.values.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    /// Writes the field as CSV: a `# grid` header line, then one value per
    /// line in storage order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let g = &self.grid;
        if g.dim == 1 {
            writeln!(w, "# grid dim=1 n={} length={}", g.n, g.lengths[0])?;
        } else {
            writeln!(
                w,
                "# grid dim=2 n={} length={},{}",
                g.n, g.lengths[0], g.lengths[1]
            )?;
        }
        for v in &self.values {
            writeln!(w, "{}", v)?;
        }
        Ok(())
    }

    /// Parses a field written by [`ScalarField::write_csv`].
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::CsvFormat {
                reason: "empty input".into(),
            })?
            .map_err(|e| Error::CsvFormat {
                reason: e.to_string(),
            })?;
        let (grid, expected) = parse_grid_header::<T>(&header)?;
        let mut values = Vec::with_capacity(expected);
        for line in lines {
            let line = line.map_err(|e| Error::CsvFormat {
                reason: e.to_string(),
            })?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let v: f64 = t.parse().map_err(|_| Error::CsvFormat {
                reason: format!("bad value {t:?}"),
            })?;
            values.push(real::<T>(v));
        }
        ScalarField::from_values(grid, values)
    }
}

fn parse_grid_header<T: Real>(header: &str) -> Result<(Grid<T>, usize)> {
    let body = header.trim_start_matches('#').trim();
    let mut dim = None;
    let mut n = None;
    let mut lengths: Vec<T> = Vec::new();
    for token in body.split_whitespace() {
        if let Some(v) = token.strip_prefix("dim=") {
            dim = v.parse::<usize>().ok();
        } else if let Some(v) = token.strip_prefix("n=") {
            n = v.parse::<usize>().ok();
        } else if let Some(v) = token.strip_prefix("length=") {
            for part in v.split(',') {
                let x: f64 = part.parse().map_err(|_| Error::CsvFormat {
                    reason: format!("bad length {part:?}"),
                })?;
                lengths.push(real::<T>(x));
            }
        }
    }
    let (dim, n) = match (dim, n) {
        (Some(d), Some(n)) => (d, n),
        _ => {
            return Err(Error::CsvFormat {
                reason: format!("malformed grid header {header:?}"),
            })
        }
    };
    let grid = Grid::new(dim, n, &lengths)?;
    Ok((grid, grid.node_count()))
}

fn gaussian_kernel<T: Real>(sigma: T, h: T) -> Vec<T> {
    let four_sigma = real::<T>(4.0) * sigma;
    let r = to_f64(four_sigma / h).floor().max(0.0) as usize;
    let mut w = Vec::with_capacity(2 * r + 1);
    let two_s2 = real::<T>(2.0) * sigma * sigma;
    for k in -(r as isize)..=(r as isize) {
        let x = real::<T>(k as f64) * h;
        w.push((-(x * x) / two_s2).exp());
    }
    let total: T = w.iter().copied().sum();
    for v in w.iter_mut() {
        *v = *v / total;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn grid1(n: usize) -> Grid<f64> {
        Grid::new_1d(n, 1.0).unwrap()
    }

    fn sine(grid: Grid<f64>, k: usize) -> ScalarField<f64> {
        ScalarField::sample(grid, |x, _| (k as f64 * std::f64::consts::PI * x).sin())
    }

    #[test]
    fn grid_construction() {
        let g = grid1(3);
        assert_eq!(g.spacing(0), 0.25);
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.coords(1)[0], 0.5);

        let g2 = Grid::new_2d(3, [1.0, 1.0]).unwrap();
        assert_eq!(g2.node_count(), 9);

        assert!(matches!(Grid::new_1d(2, 1.0), Err(Error::TooFewPoints(2))));
        assert!(matches!(Grid::new(3, 3, &[1.0, 1.0, 1.0]), Err(Error::InvalidDim(3))));
        assert!(matches!(
            Grid::new_1d(5, -1.0),
            Err(Error::NonpositiveLength(_))
        ));
    }

    #[test]
    fn l2_norm_of_first_eigenmode_is_exact() {
        // The rectangle rule sums sin^2 over equispaced nodes exactly:
        // sum = (n+1)/2, so the norm is sqrt(1/2) for every n.
        for n in [3, 10, 199] {
            let f = sine(grid1(n), 1);
            assert!((f.l2_norm() - 0.5f64.sqrt()).abs() < 1e-14, "n = {n}");
        }
    }

    #[test]
    fn l2_norm_of_constant() {
        let f = ScalarField::constant(grid1(3), 1.0);
        assert!((f.l2_norm() - 0.75f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn l2_norm_scaling_and_zero() {
        let g = grid1(17);
        let f = sine(g, 2);
        assert!((f.scaled(-3.0).l2_norm() - 3.0 * f.l2_norm()).abs() < 1e-13);
        assert_eq!(ScalarField::zeros(g).l2_norm(), 0.0);
    }

    #[test]
    fn l2_norm_second_order_in_h() {
        // sin(pi x) x (1 - x) has exact squared integral 1/60 + 3/(4 pi^4).
        let exact = (1.0 / 60.0 + 3.0 / (4.0 * std::f64::consts::PI.powi(4))).sqrt();
        let err = |n: usize| {
            let f = ScalarField::sample(grid1(n), |x, _| {
                (std::f64::consts::PI * x).sin() * x * (1.0 - x)
            });
            (f.l2_norm() - exact).abs()
        };
        let e0 = err(49);
        let e1 = err(99);
        let order = (e0 / e1).log2();
        assert!(order >= 1.9, "observed order {order}");
    }

    #[test]
    fn linf_norm() {
        let f = ScalarField::sample(grid1(9), |x, _| x - 0.7);
        assert!((f.linf_norm() - 0.7 + 0.1).abs() < 1e-15);
    }

    #[test]
    fn inner_product_orthogonality() {
        let g = grid1(31);
        for k in 1..=4usize {
            for m in 1..=4usize {
                let ip = sine(g, k).inner(&sine(g, m)).unwrap();
                let expect = if k == m { 0.5 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-13, "k={k} m={m} ip={ip}");
            }
        }
    }

    #[test]
    fn inner_matches_l2() {
        let f = ScalarField::sample(grid1(13), |x, _| x * x);
        let ip = f.inner(&f).unwrap();
        assert!((ip.sqrt() - f.l2_norm()).abs() < 1e-14);
    }

    #[test]
    fn inner_rejects_grid_mismatch() {
        let a = ScalarField::zeros(grid1(5));
        let b = ScalarField::zeros(grid1(7));
        assert!(matches!(a.inner(&b), Err(Error::GridMismatch)));
    }

    #[test]
    fn laplacian_exact_on_quadratic() {
        // x(1-x) vanishes at the boundary, so the ghost zeros agree with the
        // quadratic and the stencil is exact: Laplacian is -2 everywhere.
        let f = ScalarField::sample(grid1(25), |x, _| x * (1.0 - x));
        for &v in f.laplacian().values() {
            assert!((v + 2.0).abs() < 1e-11);
        }
    }

    #[test]
    fn laplacian_hand_stencil_n3() {
        let f = sine(grid1(3), 1);
        let lap = f.laplacian();
        let expected = (2.0 * (0.25 * std::f64::consts::PI).sin() - 2.0) / 0.0625;
        assert!((lap.values()[1] - expected).abs() < 1e-12);
        assert!((expected + 9.37258300203048).abs() < 1e-10);
    }

    #[test]
    fn laplacian_eigen_relation() {
        // Discrete eigenvalue lambda_h(k) = (2 - 2 cos(k pi h)) / h^2.
        for (n, k) in [(3usize, 1usize), (31, 2), (99, 5)] {
            let g = grid1(n);
            let h = g.spacing(0);
            let lam = (2.0 - 2.0 * (k as f64 * std::f64::consts::PI * h).cos()) / (h * h);
            let f = sine(g, k);
            let lap = f.laplacian();
            for (a, b) in lap.values().iter().zip(f.values()) {
                assert!((a + lam * b).abs() < 1e-10 * lam.max(1.0), "n={n} k={k}");
            }
        }
    }

    #[test]
    fn laplacian_linearity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let g = grid1(21);
        for _ in 0..16 {
            let a = ScalarField::from_values(
                g,
                (0..21).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let b = ScalarField::from_values(
                g,
                (0..21).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let c: f64 = rng.gen_range(-2.0..2.0);
            let lhs = a.add(&b.scaled(c)).laplacian();
            let rhs = a.laplacian().add(&b.laplacian().scaled(c));
            let diff = lhs.sub(&rhs).linf_norm();
            assert!(diff < 1e-9, "linearity violated by {diff}");
        }
    }

    #[test]
    fn laplacian_2d_eigen_relation() {
        let g = Grid::new_2d(15, [1.0, 1.0]).unwrap();
        let h = g.spacing(0);
        let pi = std::f64::consts::PI;
        let f = ScalarField::sample(g, |x, y| (pi * x).sin() * (2.0 * pi * y).sin());
        let lam = |k: f64| (2.0 - 2.0 * (k * pi * h).cos()) / (h * h);
        let expect = lam(1.0) + lam(2.0);
        let lap = f.laplacian();
        for (a, b) in lap.values().iter().zip(f.values()) {
            assert!((a + expect * b).abs() < 1e-9);
        }
    }

    #[test]
    fn h10_norm_zero_field() {
        assert_eq!(ScalarField::zeros(grid1(9)).h10_norm(), 0.0);
    }

    #[test]
    fn h10_norm_parabola() {
        // Exact H1 norm of x(1-x): sqrt(1/30 + 1/3).
        let exact = (1.0 / 30.0 + 1.0 / 3.0f64).sqrt();
        let f = ScalarField::sample(grid1(199), |x, _| x * (1.0 - x));
        assert!((f.h10_norm() - exact).abs() < 1e-4, "{}", f.h10_norm());
        assert!((exact - 0.605530).abs() < 1e-6);
    }

    #[test]
    fn h10_norm_eigenmode() {
        // Exact H1 norm of sin(pi x): sqrt(1/2 + pi^2/2).
        let exact = (0.5 + std::f64::consts::PI.powi(2) / 2.0).sqrt();
        let f = sine(grid1(399), 1);
        assert!((f.h10_norm() - exact).abs() < 1e-4);
        assert!((exact - 2.331266).abs() < 1e-5);
    }

    #[test]
    fn h10_norm_2d_product_parabola() {
        // u = x(1-x) y(1-y): |u|_L2^2 = (1/30)^2, |grad u|^2 = 2 * (1/3)(1/30).
        let exact = ((1.0 / 30.0f64).powi(2) + 2.0 / 90.0).sqrt();
        let g = Grid::new_2d(99, [1.0, 1.0]).unwrap();
        let f = ScalarField::sample(g, |x, y| x * (1.0 - x) * y * (1.0 - y));
        assert!((f.h10_norm() - exact).abs() < 2e-4);
    }

    #[test]
    fn boundary_distance_cases() {
        let f = grid1(9).boundary_distance();
        // node at x = 0.3
        assert!((f.values()[2] - 0.3).abs() < 1e-15);

        let g = Grid::<f64>::new_2d(9, [1.0, 1.0]).unwrap();
        let d = g.boundary_distance();
        // node (0.2, 0.5): distance 0.2
        let idx = (5 - 1) * 9 + (2 - 1);
        assert!((d.values()[idx] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn cutoff_profile_values() {
        let g = grid1(199);
        let eta = 0.2;
        let chi = g.cutoff(eta).unwrap();
        let dist = g.boundary_distance();
        for (c, d) in chi.values().iter().zip(dist.values()) {
            if *d >= eta - 1e-9 {
                assert!(*c >= 1.0 - 1e-9, "d = {d} chi = {c}");
            }
            if *d <= eta / 2.0 + 1e-9 {
                assert!(*c <= 1e-9, "d = {d} chi = {c}");
            }
            if (*d - 0.75 * eta).abs() < 1e-9 {
                assert!((*c - 0.5).abs() < 1e-9, "midpoint value {c}");
            }
            assert!(*c >= 0.0 && *c <= 1.0);
        }
    }

    #[test]
    fn cutoff_monotone_in_distance() {
        let g = grid1(499);
        let chi = g.cutoff(0.31).unwrap();
        let n = g.n();
        // distances increase toward the middle, so chi must too
        for i in 1..=(n / 2) {
            assert!(chi.values()[i] >= chi.values()[i - 1] - 1e-15);
        }
    }

    #[test]
    fn cutoff_rejects_bad_eta() {
        let g = grid1(9);
        assert!(g.cutoff(0.0).is_err());
        assert!(g.cutoff(0.5).is_err());
        assert!(g.cutoff(0.49).is_ok());
    }

    #[test]
    fn mollify_identity_and_zero() {
        let f = sine(grid1(33), 2);
        assert_eq!(f.mollify(0.0).unwrap(), f);
        let z = ScalarField::zeros(grid1(33));
        assert_eq!(z.mollify(0.05).unwrap(), z);
        assert!(f.mollify(-0.1).is_err());
    }

    #[test]
    fn mollify_preserves_interior_mass() {
        // A spike far enough from the boundary keeps its weighted sum:
        // the truncated kernel sums to one and never crosses the boundary.
        let g = grid1(199);
        let mut v = vec![0.0; 199];
        v[99] = 3.0; // x = 0.5
        let f = ScalarField::from_values(g, v).unwrap();
        let sigma = 0.02; // 4 sigma = 0.08 < 0.5
        let m = f.mollify(sigma).unwrap();
        let mass = |f: &ScalarField<f64>| -> f64 {
            f.values().iter().sum::<f64>() * f.grid().cell_weight()
        };
        assert!((mass(&m) - mass(&f)).abs() < 1e-10 * mass(&f));
        assert!(m.max_value() < f.max_value());
    }

    #[test]
    fn mollify_2d_smooths_and_keeps_mass() {
        let g = Grid::new_2d(49, [1.0, 1.0]).unwrap();
        let mut v = vec![0.0; 49 * 49];
        v[24 * 49 + 24] = 1.0;
        let f = ScalarField::from_values(g, v).unwrap();
        let m = f.mollify(0.05).unwrap();
        let mass = |f: &ScalarField<f64>| -> f64 {
            f.values().iter().sum::<f64>() * f.grid().cell_weight()
        };
        assert!((mass(&m) - mass(&f)).abs() < 1e-10 * mass(&f).abs());
    }

    #[test]
    fn mollify_tiny_sigma_is_identity_on_grid() {
        // Truncation radius under one spacing leaves a single-tap kernel.
        let f = sine(grid1(19), 1);
        let m = f.mollify(1e-4).unwrap();
        assert_eq!(m, f);
    }

    #[test]
    fn from_values_validation() {
        let g = grid1(5);
        assert!(matches!(
            ScalarField::from_values(g, vec![0.0; 4]),
            Err(Error::ValueCountMismatch { .. })
        ));
        assert!(matches!(
            ScalarField::from_values(g, vec![0.0, f64::NAN, 0.0, 0.0, 0.0]),
            Err(Error::NonfiniteValue { index: 1 })
        ));
    }

    #[test]
    fn csv_roundtrip_1d_and_2d() {
        let f = sine(grid1(7), 3);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = ScalarField::<f64>::read_csv(&buf[..]).unwrap();
        assert_eq!(back, f);

        let g = Grid::new_2d(4, [1.0, 0.5]).unwrap();
        let f2 = ScalarField::sample(g, |x, y| x + 10.0 * y);
        let mut buf2 = Vec::new();
        f2.write_csv(&mut buf2).unwrap();
        let back2 = ScalarField::<f64>::read_csv(&buf2[..]).unwrap();
        assert_eq!(back2, f2);
    }

    #[test]
    fn csv_rejects_garbage() {
        let r = ScalarField::<f64>::read_csv("not a header\n1.0\n".as_bytes());
        assert!(r.is_err());
    }

    #[test]
    fn works_in_f32() {
        let g = Grid::<f32>::new_1d(9, 1.0).unwrap();
        let f = ScalarField::sample(g, |x, _| (std::f32::consts::PI * x).sin());
        assert!((f.l2_norm() - 0.5f32.sqrt()).abs() < 1e-5);
    }
}
