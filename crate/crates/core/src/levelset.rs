//! Edge-based level-set evolution with distance regularization, seeded from
//! a fuzzy tumor membership map.
//!
//! The contour is the zero set of `φ`; the interior is `φ > 0`. One update is
//!
//! ```text
//! φ ← φ + τ [ μ (Δφ − div(∇φ/|∇φ|)) + λ δ_ε(φ) div(g ∇φ/|∇φ|) + ν g δ_ε(φ) ]
//! ```
//!
//! with `g` an edge-stopping function of the smoothed image gradient.
//! Differences are central, the Laplacian uses the 5-point stencil and all
//! neighbour lookups clamp to the grid (Neumann border).

use crate::error::{Error, Result};
use crate::image::{BinaryMask, GrayImage};
use crate::scalar::{to_8bit, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetField<T> {
    width: usize,
    height: usize,
    phi: Vec<T>,
}

impl<T: Scalar> LevelSetField<T> {
    pub fn new(width: usize, height: usize, phi: Vec<T>) -> Result<Self> {
        if phi.len() != width * height {
            return Err(Error::arg("level-set buffer does not match dimensions"));
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("level-set values must be finite"));
        }
        Ok(Self { width, height, phi })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut phi = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                phi.push(f(r, c));
            }
        }
        Self { width, height, phi }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.phi
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.phi[row * self.width + col]
    }

    /// Number of interior (`φ > 0`) pixels.
    pub fn area(&self) -> usize {
        self.phi.iter().filter(|&&v| v > T::zero()).count()
    }
}

/// Edge-stopping function `g` in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeIndicator<T> {
    width: usize,
    height: usize,
    g: Vec<T>,
}

impl<T: Scalar> EdgeIndicator<T> {
    /// Constant `g = 1` (no edges).
    pub fn flat(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            g: vec![T::one(); width * height],
        }
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.g
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.g[row * self.width + col]
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetConfig {
    /// Dirac regularization width ε.
    pub epsilon: f64,
    /// Membership threshold for the initial region.
    pub b0: f64,
    /// Time step τ.
    pub tau: f64,
    /// Distance-regularization weight μ.
    pub mu: f64,
    /// Weighted-length (edge) term weight λ.
    pub lambda: f64,
    /// Balloon weight ν; positive values expand the interior.
    pub nu: f64,
    pub iterations: usize,
    /// Gaussian σ used before differentiating the image.
    pub smoothing_sigma: f64,
    /// Floor on |∇φ| in normalizations.
    pub grad_floor: f64,
    /// Stop once the interior changes by fewer than this fraction of pixels
    /// for `early_stop_patience` consecutive iterations; 0 disables.
    pub early_stop_frac: f64,
    pub early_stop_patience: usize,
}

impl Default for LevelSetConfig {
    fn default() -> Self {
        Self {
            epsilon: 1.5,
            b0: 0.5,
            tau: 5.0,
            mu: 0.04,
            lambda: 5.0,
            nu: 1.5,
            iterations: 200,
            smoothing_sigma: 1.5,
            grad_floor: 1e-10,
            early_stop_frac: 1e-4,
            early_stop_patience: 5,
        }
    }
}

impl LevelSetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.b0 > 0.0 && self.b0 < 1.0) {
            return Err(Error::arg(format!("b0 = {} must lie in (0, 1)", self.b0)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::arg("epsilon must be positive"));
        }
        if !(self.tau > 0.0 && self.mu >= 0.0 && self.tau * self.mu < 0.25) {
            return Err(Error::arg(format!(
                "unstable time step: tau * mu = {} must be below 0.25",
                self.tau * self.mu
            )));
        }
        if !(self.smoothing_sigma > 0.0) {
            return Err(Error::arg("smoothing sigma must be positive"));
        }
        if !(self.grad_floor > 0.0) {
            return Err(Error::arg("gradient floor must be positive"));
        }
        if !(self.early_stop_frac >= 0.0) {
            return Err(Error::arg("early-stop fraction must be non-negative"));
        }
        Ok(())
    }
}

/// Initial region `R_k >= b0`.
pub fn binarize_membership<T: Scalar>(r_k: &GrayImage<T>, b0: f64) -> Result<BinaryMask> {
    if !(b0 > 0.0 && b0 < 1.0) {
        return Err(Error::arg(format!("b0 = {} must lie in (0, 1)", b0)));
    }
    let b0 = T::cast(b0);
    Ok(BinaryMask::from_fn(r_k.width(), r_k.height(), |r, c| {
        r_k.get(r, c) >= b0
    }))
}

/// Binary step `φ = −4ε (0.5 − B)`: `+2ε` inside, `−2ε` outside.
pub fn init_phi<T: Scalar>(mask: &BinaryMask, epsilon: f64) -> LevelSetField<T> {
    let scale = T::cast(-4.0 * epsilon);
    let half = T::cast(0.5);
    LevelSetField::from_fn(mask.width(), mask.height(), |r, c| {
        let b = if mask.get(r, c) { T::one() } else { T::zero() };
        scale * (half - b)
    })
}

/// Smoothed Dirac delta, supported on `[−ε, ε]`.
#[inline]
pub fn dirac<T: Scalar>(x: T, epsilon: T) -> T {
    if x.abs() > epsilon {
        T::zero()
    } else {
        (T::one() + (T::PI() * x / epsilon).cos()) / (T::cast(2.0) * epsilon)
    }
}

/// Interior mask `φ > 0`.
pub fn extract_mask<T: Scalar>(phi: &LevelSetField<T>) -> BinaryMask {
    BinaryMask::from_fn(phi.width, phi.height, |r, c| phi.get(r, c) > T::zero())
}

/// Normalized Gaussian taps truncated at 3σ.
pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Separable Gaussian blur with replicate borders.
pub fn gaussian_blur<T: Scalar>(image: &GrayImage<T>, sigma: f64) -> GrayImage<T> {
    let kernel: Vec<T> = gaussian_kernel(sigma).into_iter().map(T::cast).collect();
    let radius = (kernel.len() / 2) as isize;
    let (w, h) = (image.width(), image.height());
    let horiz = GrayImage::from_fn(w, h, |r, c| {
        kernel
            .iter()
            .enumerate()
            .map(|(k, &t)| t * image.get_clamped(r as isize, c as isize + k as isize - radius))
            .sum()
    });
    GrayImage::from_fn(w, h, |r, c| {
        kernel
            .iter()
            .enumerate()
            .map(|(k, &t)| t * horiz.get_clamped(r as isize + k as isize - radius, c as isize))
            .sum()
    })
}

/// `g = 1 / (1 + |∇(G_σ * I)|²)`, with the gradient taken on the 8-bit
/// intensity scale so that contrast edges drive `g` towards zero.
pub fn edge_indicator<T: Scalar>(image: &GrayImage<T>, sigma: f64) -> Result<EdgeIndicator<T>> {
    if !(sigma > 0.0) {
        return Err(Error::arg("smoothing sigma must be positive"));
    }
    let smooth = gaussian_blur(&image.map(to_8bit), sigma);
    let (w, h) = (image.width(), image.height());
    let half = T::cast(0.5);
    let mut g = Vec::with_capacity(w * h);
    for r in 0..h as isize {
        for c in 0..w as isize {
            let gx = (smooth.get_clamped(r, c + 1) - smooth.get_clamped(r, c - 1)) * half;
            let gy = (smooth.get_clamped(r + 1, c) - smooth.get_clamped(r - 1, c)) * half;
            g.push(T::one() / (T::one() + gx * gx + gy * gy));
        }
    }
    Ok(EdgeIndicator {
        width: w,
        height: h,
        g,
    })
}

/// Row-major grid view with clamped neighbour lookup.
struct Grid<'a, T> {
    w: usize,
    h: usize,
    v: &'a [T],
}

impl<T: Scalar> Grid<'_, T> {
    #[inline]
    fn at(&self, r: usize, c: usize) -> T {
        self.v[r * self.w + c]
    }

    /// Central x/y differences with clamped neighbours.
    #[inline]
    fn diff(&self, r: usize, c: usize) -> (T, T) {
        let half = T::cast(0.5);
        let (cl, cr) = (c.saturating_sub(1), (c + 1).min(self.w - 1));
        let (ru, rd) = (r.saturating_sub(1), (r + 1).min(self.h - 1));
        (
            (self.at(r, cr) - self.at(r, cl)) * half,
            (self.at(rd, c) - self.at(ru, c)) * half,
        )
    }
}

/// Divergence of the vector field `(fx, fy)` by central differences.
fn divergence<T: Scalar>(fx: &[T], fy: &[T], w: usize, h: usize) -> Vec<T> {
    let gx = Grid { w, h, v: fx };
    let gy = Grid { w, h, v: fy };
    let mut out = Vec::with_capacity(w * h);
    for r in 0..h {
        for c in 0..w {
            out.push(gx.diff(r, c).0 + gy.diff(r, c).1);
        }
    }
    out
}

/// One explicit update of the level-set function.
pub fn evolve_step<T: Scalar>(
    phi: &LevelSetField<T>,
    g: &EdgeIndicator<T>,
    config: &LevelSetConfig,
) -> Result<LevelSetField<T>> {
    let (w, h) = (phi.width, phi.height);
    if g.width != w || g.height != h {
        return Err(Error::arg(
            "edge indicator does not match level-set dimensions",
        ));
    }
    if !(config.tau * config.mu < 0.25) {
        return Err(Error::arg(
            "unstable time step: tau * mu must be below 0.25",
        ));
    }
    let grid = Grid { w, h, v: &phi.phi };
    let floor = T::cast(config.grad_floor);
    let n = w * h;

    let mut nx = Vec::with_capacity(n);
    let mut ny = Vec::with_capacity(n);
    let mut gnx = Vec::with_capacity(n);
    let mut gny = Vec::with_capacity(n);
    for r in 0..h {
        for c in 0..w {
            let (px, py) = grid.diff(r, c);
            let norm = (px * px + py * py).sqrt().max(floor);
            let (ux, uy) = (px / norm, py / norm);
            let gv = g.get(r, c);
            nx.push(ux);
            ny.push(uy);
            gnx.push(gv * ux);
            gny.push(gv * uy);
        }
    }
    let curvature = divergence(&nx, &ny, w, h);
    let edge_div = divergence(&gnx, &gny, w, h);

    let (tau, mu, lambda, nu) = (
        T::cast(config.tau),
        T::cast(config.mu),
        T::cast(config.lambda),
        T::cast(config.nu),
    );
    let eps = T::cast(config.epsilon);
    let four = T::cast(4.0);
    let mut out = Vec::with_capacity(n);
    for r in 0..h {
        let (ru, rd) = (r.saturating_sub(1), (r + 1).min(h - 1));
        for c in 0..w {
            let (cl, cr) = (c.saturating_sub(1), (c + 1).min(w - 1));
            let i = r * w + c;
            let v = phi.phi[i];
            let lap = grid.at(r, cl) + grid.at(r, cr) + grid.at(ru, c) + grid.at(rd, c) - four * v;
            let reg = lap - curvature[i];
            let d = dirac(v, eps);
            let edge = lambda * d * edge_div[i] + nu * g.g[i] * d;
            let next = v + tau * (mu * reg + edge);
            if !next.is_finite() {
                return Err(Error::Divergence(format!(
                    "level set became non-finite at ({}, {})",
                    r, c
                )));
            }
            out.push(next);
        }
    }
    Ok(LevelSetField {
        width: w,
        height: h,
        phi: out,
    })
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationStats {
    pub iteration: usize,
    /// Interior pixel count after the update.
    pub area: usize,
    pub mean_abs_delta: f64,
}

impl IterationStats {
    /// One line of structured text for logs.
    pub fn to_line(&self) -> String {
        format!(
            "iteration={} area={} mean_abs_delta={:.6e}",
            self.iteration, self.area, self.mean_abs_delta
        )
    }
}

#[derive(Debug, Clone)]
pub struct Evolution<T> {
    pub field: LevelSetField<T>,
    pub iterations: usize,
    pub stats: Vec<IterationStats>,
}

impl<T: Scalar> Evolution<T> {
    pub fn mask(&self) -> BinaryMask {
        extract_mask(&self.field)
    }
}

/// Evolve from an explicit initial field.
pub fn evolve_field<T: Scalar>(
    init: LevelSetField<T>,
    g: &EdgeIndicator<T>,
    config: &LevelSetConfig,
) -> Result<Evolution<T>> {
    config.validate()?;
    let n = init.phi.len().max(1);
    let change_limit = config.early_stop_frac * n as f64;
    let mut phi = init;
    let mut mask = extract_mask(&phi);
    let mut quiet = 0usize;
    let mut stats = Vec::new();
    let mut iterations = 0;

    while iterations < config.iterations {
        let next = evolve_step(&phi, g, config)?;
        iterations += 1;
        let delta: f64 = next
            .phi
            .iter()
            .zip(&phi.phi)
            .map(|(&a, &b)| (a - b).abs().as_f64())
            .sum::<f64>()
            / n as f64;
        let next_mask = extract_mask(&next);
        let changed = next_mask.hamming(&mask)?;
        stats.push(IterationStats {
            iteration: iterations,
            area: next_mask.count(),
            mean_abs_delta: delta,
        });
        phi = next;
        mask = next_mask;

        if config.early_stop_frac > 0.0 {
            if (changed as f64) < change_limit {
                quiet += 1;
            } else {
                quiet = 0;
            }
            if config.early_stop_patience > 0 && quiet >= config.early_stop_patience {
                break;
            }
        }
    }
    Ok(Evolution {
        field: phi,
        iterations,
        stats,
    })
}

/// Segment `image` starting from the region `r_k >= b0`.
pub fn evolve<T: Scalar>(
    r_k: &GrayImage<T>,
    image: &GrayImage<T>,
    config: &LevelSetConfig,
) -> Result<Evolution<T>> {
    config.validate()?;
    if !r_k.same_dims(image) {
        return Err(Error::arg("membership map and image differ in size"));
    }
    let seed = binarize_membership(r_k, config.b0)?;
    let phi = init_phi(&seed, config.epsilon);
    let g = edge_indicator(image, config.smoothing_sigma)?;
    evolve_field(phi, &g, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dirac_values() {
        assert!((dirac(0.0f64, 1.5) - 2.0 / 3.0).abs() < 1e-15);
        assert!(dirac(1.5f64, 1.5).abs() < 1e-15);
        assert_eq!(dirac(1.6f64, 1.5), 0.0);
        assert_eq!(dirac(-2.0f64, 1.5), 0.0);
    }

    #[test]
    fn dirac_integrates_to_one() {
        for eps in [0.5f64, 1.5, 3.0] {
            let n = 10_000;
            let hstep = 2.0 * eps / n as f64;
            let mut total = 0.0;
            for i in 0..n {
                let (a, b) = (-eps + i as f64 * hstep, -eps + (i + 1) as f64 * hstep);
                total += 0.5 * hstep * (dirac(a, eps) + dirac(b, eps));
            }
            assert!((total - 1.0).abs() < 1e-3, "eps {} -> {}", eps, total);
        }
    }

    #[test]
    fn init_phi_levels() {
        let mut mask = BinaryMask::empty(2, 1);
        mask.set(0, 0, true);
        let phi = init_phi::<f64>(&mask, 1.5);
        assert_eq!(phi.values(), &[3.0, -3.0]);
    }

    #[test]
    fn binarize_is_inclusive_and_checks_b0() {
        let r = GrayImage::new(3, 1, vec![0.5f64, 0.49, 0.0]).unwrap();
        let m = binarize_membership(&r, 0.5).unwrap();
        assert_eq!(m.data(), &[true, false, false]);
        assert!(binarize_membership(&r, 0.0).is_err());
        assert!(binarize_membership(&r, 1.0).is_err());
        let zero = GrayImage::filled(4, 4, 0.0f64);
        assert!(binarize_membership(&zero, 0.3).unwrap().is_clear());
    }

    #[test]
    fn extract_mask_of_negative_field_is_empty() {
        let phi = LevelSetField::from_fn(4, 3, |_, _| -1.0f64);
        assert!(extract_mask(&phi).is_clear());
    }

    #[test]
    fn edge_indicator_flat_and_step() {
        let flat = GrayImage::filled(9, 9, 0.4f64);
        let g = edge_indicator(&flat, 1.5).unwrap();
        assert!(g.values().iter().all(|&v| (v - 1.0).abs() < 1e-12));

        let step = GrayImage::from_fn(20, 5, |_, c| if c < 10 { 0.2f64 } else { 0.8 });
        let g = edge_indicator(&step, 1.0).unwrap();
        let row: Vec<f64> = (0..20).map(|c| g.get(2, c)).collect();
        assert!(row.iter().all(|&v| v > 0.0 && v <= 1.0));
        // minimum straddles the step between columns 9 and 10
        let (argmin, _) =
            row.iter().enumerate().fold(
                (0, f64::INFINITY),
                |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) },
            );
        assert!(argmin == 9 || argmin == 10);
        assert!(row[9] < row[6] && row[10] < row[13]);
    }

    #[test]
    fn far_field_plane_is_stationary() {
        let phi = LevelSetField::from_fn(30, 30, |_, c| c as f64 - 3.5);
        let g = EdgeIndicator::flat(30, 30);
        let next = evolve_step(&phi, &g, &LevelSetConfig::default()).unwrap();
        for r in 1..29 {
            for c in 8..29 {
                assert!((next.get(r, c) - phi.get(r, c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unstable_config_rejected() {
        let cfg = LevelSetConfig {
            tau: 10.0,
            mu: 0.03,
            ..LevelSetConfig::default()
        };
        assert!(cfg.validate().is_err());
        let phi = LevelSetField::from_fn(3, 3, |_, _| 1.0f64);
        assert!(evolve_step(&phi, &EdgeIndicator::flat(3, 3), &cfg).is_err());
    }

    #[test]
    fn zero_iterations_returns_init() {
        let r = GrayImage::from_fn(8, 8, |r, c| if r > 2 && c > 2 { 0.9f64 } else { 0.1 });
        let cfg = LevelSetConfig {
            iterations: 0,
            ..LevelSetConfig::default()
        };
        let out = evolve(&r, &r, &cfg).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(
            out.field,
            init_phi(&binarize_membership(&r, 0.5).unwrap(), 1.5)
        );
    }

    proptest! {
        #[test]
        fn init_then_extract_is_identity(bits in proptest::collection::vec(any::<bool>(), 48), eps in 0.01f64..10.0) {
            let mask = BinaryMask::new(8, 6, bits).unwrap();
            prop_assert_eq!(extract_mask(&init_phi::<f64>(&mask, eps)), mask);
        }

        #[test]
        fn dirac_is_even_and_bounded(x in -5.0f64..5.0, eps in 0.1f64..4.0) {
            prop_assert_eq!(dirac(x, eps), dirac(-x, eps));
            prop_assert!(dirac(x, eps) >= 0.0 && dirac(x, eps) <= 1.0 / eps + 1e-12);
        }
    }
}
