//! Spectral ↔ physical transforms and dealiased pointwise products.
//!
//! A [`Transformer`] samples a truncated field on a uniform `M^d` grid with
//! `M ≥ N` (zero-padding in spectral space) and maps grid values back by a
//! forward FFT followed by truncation to the retained modes. The mean-mode
//! coefficient equals the grid average, so `∫ g = L^d · c_0` is exact.
//!
//! A product of total polynomial degree `D` of fields bandlimited to
//! `|k_i| ≤ K = N/2 - 1` is alias-free on the retained modes iff
//! `M > (D + 1) K`. That gives the usual rules: `3N/2` points for quadratic
//! terms, `2N` for cubic ones.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::basis::{DomainSpec, ScalarField};

/// Grid refinement relative to `N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Padding {
    /// `M = N`, collocation grid.
    None,
    /// `M = 3N/2`, the 3/2 rule.
    ThreeHalves,
    /// `M = 2N`.
    Double,
}

impl Padding {
    pub fn grid_points(self, modes: usize) -> usize {
        match self {
            Padding::None => modes,
            Padding::ThreeHalves => 3 * modes / 2,
            Padding::Double => 2 * modes,
        }
    }
}

/// Whether a degree-`degree` product is exact on the retained modes of an
/// `N`-mode field sampled on `m` points per axis.
pub fn alias_free(m: usize, modes: usize, degree: usize) -> bool {
    let k = modes / 2 - 1;
    m > (degree + 1) * k
}

/// Record of a product that is not exactly representable on its grid.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AliasingWarning {
    pub term: String,
    /// Polynomial degree, or `None` for non-polynomial nonlinearities.
    pub degree: Option<usize>,
    pub grid_points: usize,
}

impl std::fmt::Display for AliasingWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.degree {
            Some(d) => write!(
                f,
                "{}: degree-{d} product aliased on a {}-point grid",
                self.term, self.grid_points
            ),
            None => write!(
                f,
                "{}: non-polynomial term evaluated on a {}-point grid and truncated",
                self.term, self.grid_points
            ),
        }
    }
}

/// Real samples on a uniform `M^d` grid, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalGrid {
    domain: DomainSpec,
    points: usize,
    values: Vec<f64>,
}

impl PhysicalGrid {
    pub fn from_values(domain: DomainSpec, points: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), points.pow(domain.dim() as u32));
        Self {
            domain,
            points,
            values,
        }
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    /// Points per axis, `M`.
    pub fn points(&self) -> usize {
        self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Physical coordinates of grid point `index`.
    pub fn coordinate(&self, index: usize) -> [f64; 3] {
        let h = self.domain.side_length() / self.points as f64;
        let mut x = [0.0; 3];
        let mut rest = index;
        for axis in (0..self.domain.dim()).rev() {
            x[axis] = (rest % self.points) as f64 * h;
            rest /= self.points;
        }
        x
    }

    /// `∫ g dx` by the trapezoid (= rectangle) rule, exact for trigonometric
    /// polynomials of degree below `M`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64 * self.domain.volume()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            domain: self.domain,
            points: self.points,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.points, other.points);
        Self {
            domain: self.domain,
            points: self.points,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// FFT plans and index maps for one `(domain, M)` pair. Cheap to clone.
#[derive(Clone)]
pub struct Transformer {
    domain: DomainSpec,
    points: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// grid position of each spectral index; `usize::MAX` on Nyquist planes
    embed: Arc<Vec<usize>>,
    /// `-k` partner of each spectral index
    negated: Arc<Vec<usize>>,
}

impl std::fmt::Debug for Transformer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Transformer")
            .field("domain", &self.domain)
            .field("points", &self.points)
            .finish()
    }
}

impl Transformer {
    pub fn new(domain: DomainSpec, padding: Padding) -> Self {
        Self::with_grid(domain, padding.grid_points(domain.modes()))
    }

    /// Transformer on an arbitrary `points ≥ N` grid (used by refined-grid
    /// quadrature oracles).
    pub fn with_grid(domain: DomainSpec, points: usize) -> Self {
        assert!(points >= domain.modes(), "grid coarser than the truncation");
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(points);
        let inverse = planner.plan_fft_inverse(points);
        let dim = domain.dim();
        let embed = (0..domain.len())
            .map(|i| {
                if domain.is_nyquist(i) {
                    return usize::MAX;
                }
                let k = domain.wavevector(i);
                (0..dim).fold(0usize, |acc, a| {
                    acc * points + k.k[a].rem_euclid(points as i64) as usize
                })
            })
            .collect();
        let negated = (0..domain.len()).map(|i| domain.negated_index(i)).collect();
        Self {
            domain,
            points,
            forward,
            inverse,
            embed: Arc::new(embed),
            negated: Arc::new(negated),
        }
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn points(&self) -> usize {
        self.points
    }

    fn grid_len(&self) -> usize {
        self.points.pow(self.domain.dim() as u32)
    }

    fn transform_axes(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let m = self.points;
        let dim = self.domain.dim();
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        // last axis is contiguous
        plan.process_with_scratch(buf, &mut scratch);
        let mut lines = vec![Complex64::new(0.0, 0.0); buf.len()];
        for axis in 0..dim - 1 {
            let stride = m.pow((dim - 1 - axis) as u32);
            let block = stride * m;
            // gather every line along `axis` into contiguous storage, batch
            // transform, scatter back
            for (b, chunk) in buf.chunks_exact(block).enumerate() {
                let out = &mut lines[b * block..(b + 1) * block];
                for inner in 0..stride {
                    for j in 0..m {
                        out[inner * m + j] = chunk[inner + j * stride];
                    }
                }
            }
            plan.process_with_scratch(&mut lines, &mut scratch);
            for (b, chunk) in buf.chunks_exact_mut(block).enumerate() {
                let src = &lines[b * block..(b + 1) * block];
                for inner in 0..stride {
                    for j in 0..m {
                        chunk[inner + j * stride] = src[inner * m + j];
                    }
                }
            }
        }
    }

    /// Sample a spectral field on the grid.
    pub fn to_physical(&self, field: &ScalarField) -> PhysicalGrid {
        assert_eq!(field.domain(), &self.domain, "field on a different domain");
        let mut buf = vec![Complex64::new(0.0, 0.0); self.grid_len()];
        for (c, &g) in field.coeffs().iter().zip(self.embed.iter()) {
            if g != usize::MAX {
                buf[g] = *c;
            }
        }
        self.transform_axes(&mut buf, &self.inverse);
        PhysicalGrid {
            domain: self.domain,
            points: self.points,
            values: buf.into_iter().map(|c| c.re).collect(),
        }
    }

    /// Forward transform and truncation to the retained, Hermitian-symmetric
    /// modes.
    pub fn to_spectral(&self, grid: &PhysicalGrid) -> ScalarField {
        assert_eq!(grid.points, self.points, "grid size mismatch");
        let mut buf: Vec<Complex64> = grid
            .values
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        self.transform_axes(&mut buf, &self.forward);
        let scale = 1.0 / buf.len() as f64;
        let mut out = ScalarField::zeros(self.domain);
        let coeffs = out.coeffs_mut();
        for (i, &g) in self.embed.iter().enumerate() {
            if g != usize::MAX {
                coeffs[i] = buf[g] * scale;
            }
        }
        // exact conjugate symmetry; the FFT only guarantees it to rounding
        for i in 0..coeffs.len() {
            let j = self.negated[i];
            if self.embed[i] == usize::MAX || j < i {
                continue;
            }
            if j == i {
                coeffs[i].im = 0.0;
            } else {
                let avg = (coeffs[i] + coeffs[j].conj()) * 0.5;
                coeffs[i] = avg;
                coeffs[j] = avg.conj();
            }
        }
        out
    }

    /// `∫ f(a(x)) dx` on this grid.
    pub fn integrate(&self, field: &ScalarField, f: impl Fn(f64) -> f64) -> f64 {
        self.to_physical(field).map(f).integral()
    }
}

/// The three standard transformers for one domain, plus the quadrature grid
/// used for non-polynomial nonlinearities.
#[derive(Clone, Debug)]
pub struct TransformSet {
    collocation: Transformer,
    three_halves: Transformer,
    double: Transformer,
    nonpolynomial_factor: usize,
    // only built when the factor differs from 2
    refined: Option<Transformer>,
}

impl TransformSet {
    pub fn new(domain: DomainSpec) -> Self {
        Self::with_nonpolynomial_factor(domain, 2)
    }

    /// Evaluate non-polynomial terms on `factor·N` points per axis instead of
    /// `2N`. Their truncation error falls with the factor; polynomial terms
    /// are exact either way and keep their alias-free grids.
    pub fn with_nonpolynomial_factor(domain: DomainSpec, factor: usize) -> Self {
        assert!(factor >= 2, "non-polynomial grid factor below 2");
        let refined =
            (factor != 2).then(|| Transformer::with_grid(domain, factor * domain.modes()));
        Self {
            collocation: Transformer::new(domain, Padding::None),
            three_halves: Transformer::new(domain, Padding::ThreeHalves),
            double: Transformer::new(domain, Padding::Double),
            nonpolynomial_factor: factor,
            refined,
        }
    }

    pub fn nonpolynomial_factor(&self) -> usize {
        self.nonpolynomial_factor
    }

    /// Grid for non-polynomial pointwise maps.
    pub fn nonpolynomial(&self) -> &Transformer {
        self.refined.as_ref().unwrap_or(&self.double)
    }

    pub fn domain(&self) -> &DomainSpec {
        self.collocation.domain()
    }

    pub fn get(&self, padding: Padding) -> &Transformer {
        match padding {
            Padding::None => &self.collocation,
            Padding::ThreeHalves => &self.three_halves,
            Padding::Double => &self.double,
        }
    }

    /// Smallest standard padding that is alias-free for `degree`, or the
    /// double grid plus a warning when none is.
    pub fn padding_for(&self, degree: usize, term: &str) -> (Padding, Option<AliasingWarning>) {
        let n = self.domain().modes();
        for p in [Padding::None, Padding::ThreeHalves, Padding::Double] {
            if alias_free(p.grid_points(n), n, degree) {
                return (p, None);
            }
        }
        let warning = AliasingWarning {
            term: term.to_string(),
            degree: Some(degree),
            grid_points: Padding::Double.grid_points(n),
        };
        (Padding::Double, Some(warning))
    }

    /// Truncated product `P_N(a·b)`, with `degree` the total polynomial degree
    /// of the expression the product is part of (≥ 2).
    pub fn dealiased_product(
        &self,
        a: &ScalarField,
        b: &ScalarField,
        degree: usize,
    ) -> (ScalarField, Option<AliasingWarning>) {
        let (padding, warning) = self.padding_for(degree.max(2), "product");
        let t = self.get(padding);
        let ga = t.to_physical(a);
        let gb = t.to_physical(b);
        (t.to_spectral(&ga.zip_map(&gb, |x, y| x * y)), warning)
    }
}
