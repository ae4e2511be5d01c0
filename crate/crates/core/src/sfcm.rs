//! Spatial fuzzy c-means clustering of pixel intensities.
//!
//! Each iteration alternates the classical FCM center and membership updates
//! with a spatial refinement that reweights memberships by the membership
//! mass of the surrounding window, which suppresses isolated noisy labels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::scalar::Scalar;

/// Fuzzy memberships `μ[m, n]` of `pixels` over `clusters`, cluster-major.
/// Every pixel column sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipMatrix<T> {
    clusters: usize,
    width: usize,
    height: usize,
    values: Vec<T>,
}

fn column_tolerance<T: Scalar>(clusters: usize) -> f64 {
    (100.0 * T::epsilon().as_f64() * clusters as f64).max(1e-9)
}

impl<T: Scalar> MembershipMatrix<T> {
    /// Wrap cluster-major values; checks range and column sums.
    pub fn new(clusters: usize, width: usize, height: usize, values: Vec<T>) -> Result<Self> {
        let n = width * height;
        if clusters == 0 || values.len() != clusters * n {
            return Err(Error::arg(format!(
                "membership buffer has {} values, expected {} clusters x {} pixels",
                values.len(),
                clusters,
                n
            )));
        }
        if values.iter().any(|&v| !(v >= T::zero() && v <= T::one())) {
            return Err(Error::arg("memberships must lie in [0, 1]"));
        }
        let m = Self {
            clusters,
            width,
            height,
            values,
        };
        let tol = column_tolerance::<T>(clusters);
        if let Some(px) = (0..n).find(|&px| (m.column_sum(px).as_f64() - 1.0).abs() > tol) {
            return Err(Error::arg(format!(
                "memberships of pixel {} do not sum to 1",
                px
            )));
        }
        Ok(m)
    }

    /// Random memberships with normalized columns.
    pub fn random(clusters: usize, width: usize, height: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = width * height;
        let mut values = vec![T::zero(); clusters * n];
        for px in 0..n {
            let draws: Vec<f64> = (0..clusters).map(|_| rng.random::<f64>() + 1e-3).collect();
            let total: f64 = draws.iter().sum();
            for (m, d) in draws.into_iter().enumerate() {
                values[m * n + px] = T::cast(d / total);
            }
        }
        Self {
            clusters,
            width,
            height,
            values,
        }
    }

    #[inline]
    pub fn clusters(&self) -> usize {
        self.clusters
    }

    #[inline]
    pub fn pixels(&self) -> usize {
        self.width * self.height
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
    pub fn get(&self, cluster: usize, pixel: usize) -> T {
        self.values[cluster * self.pixels() + pixel]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Membership plane of one cluster.
    pub fn plane(&self, cluster: usize) -> &[T] {
        let n = self.pixels();
        &self.values[cluster * n..(cluster + 1) * n]
    }

    pub fn column_sum(&self, pixel: usize) -> T {
        (0..self.clusters).map(|m| self.get(m, pixel)).sum()
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }

    /// Reorder clusters: row `i` of the result is row `order[i]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let n = self.pixels();
        let mut values = Vec::with_capacity(self.values.len());
        for &src in order {
            values.extend_from_slice(&self.values[src * n..(src + 1) * n]);
        }
        Self { values, ..*self }
    }
}

/// Cluster centers `v_m` on the unit intensity scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterCenters<T>(pub Vec<T>);

#[derive(Debug, Clone, PartialEq)]
pub struct SfcmConfig {
    pub clusters: usize,
    /// Fuzzification exponent `L > 1`.
    pub fuzziness: f64,
    /// Exponent on the pixel's own membership in the spatial refinement.
    pub p: f64,
    /// Exponent on the neighbourhood membership mass; `q = 0` is plain FCM.
    pub q: f64,
    pub window_radius: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for SfcmConfig {
    fn default() -> Self {
        Self {
            clusters: 4,
            fuzziness: 2.0,
            p: 1.0,
            q: 1.0,
            window_radius: 2,
            tol: 1e-4,
            max_iter: 100,
            seed: 0,
        }
    }
}

impl SfcmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clusters == 0 {
            return Err(Error::arg("cluster count must be at least 1"));
        }
        if !(self.fuzziness > 1.0) {
            return Err(Error::arg("fuzziness exponent must exceed 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::arg("convergence tolerance must be positive"));
        }
        if !(self.p >= 0.0 && self.q >= 0.0) {
            return Err(Error::arg("spatial exponents must be non-negative"));
        }
        Ok(())
    }
}

fn check_dims<T: Scalar>(image: &GrayImage<T>, m: &MembershipMatrix<T>) -> Result<()> {
    if image.width() != m.width || image.height() != m.height {
        return Err(Error::arg(format!(
            "memberships cover {}x{} pixels but image is {}x{}",
            m.width,
            m.height,
            image.width(),
            image.height()
        )));
    }
    Ok(())
}

/// Weighted cluster means `v_m = Σ μ^L i / Σ μ^L`.
pub fn centers<T: Scalar>(
    image: &GrayImage<T>,
    memberships: &MembershipMatrix<T>,
    fuzziness: f64,
) -> Result<ClusterCenters<T>> {
    check_dims(image, memberships)?;
    let l = T::cast(fuzziness);
    let mut out = Vec::with_capacity(memberships.clusters);
    for m in 0..memberships.clusters {
        let (mut num, mut den) = (T::zero(), T::zero());
        for (&u, &i) in memberships.plane(m).iter().zip(image.data()) {
            let w = u.powf(l);
            num += w * i;
            den += w;
        }
        if !(den > T::zero()) {
            return Err(Error::Degenerate(format!(
                "cluster {} has no membership mass",
                m
            )));
        }
        out.push(num / den);
    }
    Ok(ClusterCenters(out))
}

/// Memberships implied by fixed centers (inverse-distance ratios with
/// exponent `2/(L-1)`). A pixel lying exactly on one or more centers splits
/// its membership evenly among them.
pub fn memberships_for_centers<T: Scalar>(
    image: &GrayImage<T>,
    centers: &ClusterCenters<T>,
    fuzziness: f64,
) -> MembershipMatrix<T> {
    let c = centers.0.len();
    let n = image.len();
    let exponent = T::cast(2.0 / (fuzziness - 1.0));
    let mut values = vec![T::zero(); c * n];
    let mut dist = vec![T::zero(); c];
    for (px, &i) in image.data().iter().enumerate() {
        for (d, &v) in dist.iter_mut().zip(&centers.0) {
            *d = (i - v).abs();
        }
        let zeros = dist.iter().filter(|&&d| d == T::zero()).count();
        if zeros > 0 {
            let share = T::one() / T::count(zeros);
            for m in 0..c {
                if dist[m] == T::zero() {
                    values[m * n + px] = share;
                }
            }
            continue;
        }
        for m in 0..c {
            let denom: T = dist.iter().map(|&dk| (dist[m] / dk).powf(exponent)).sum();
            values[m * n + px] = T::one() / denom;
        }
    }
    MembershipMatrix {
        clusters: c,
        width: image.width(),
        height: image.height(),
        values,
    }
}

/// One FCM sweep: centers from the current memberships, then memberships
/// from those centers.
pub fn fcm_iterate<T: Scalar>(
    image: &GrayImage<T>,
    memberships: &MembershipMatrix<T>,
    config: &SfcmConfig,
) -> Result<(MembershipMatrix<T>, ClusterCenters<T>)> {
    let v = centers(image, memberships, config.fuzziness)?;
    let u = memberships_for_centers(image, &v, config.fuzziness);
    Ok((u, v))
}

/// Windowed sum with replicate borders, computed separably.
fn window_sum<T: Scalar>(plane: &[T], width: usize, height: usize, radius: usize) -> Vec<T> {
    let r = radius as isize;
    let clamp_c = |c: isize| c.clamp(0, width as isize - 1) as usize;
    let clamp_r = |c: isize| c.clamp(0, height as isize - 1) as usize;
    let mut horiz = vec![T::zero(); plane.len()];
    for row in 0..height {
        let line = &plane[row * width..(row + 1) * width];
        for col in 0..width {
            let mut acc = T::zero();
            for d in -r..=r {
                acc += line[clamp_c(col as isize + d)];
            }
            horiz[row * width + col] = acc;
        }
    }
    let mut out = vec![T::zero(); plane.len()];
    for row in 0..height {
        for col in 0..width {
            let mut acc = T::zero();
            for d in -r..=r {
                acc += horiz[clamp_r(row as isize + d) * width + col];
            }
            out[row * width + col] = acc;
        }
    }
    out
}

/// Reweight each membership by the membership mass of its window:
/// `μ' ∝ μ^p h^q` with `h` the window sum, renormalized per pixel.
pub fn spatial_refine<T: Scalar>(
    memberships: &MembershipMatrix<T>,
    config: &SfcmConfig,
) -> Result<MembershipMatrix<T>> {
    let (w, h) = (memberships.width, memberships.height);
    let n = w * h;
    let c = memberships.clusters;
    let (p, q) = (T::cast(config.p), T::cast(config.q));
    let mut values = Vec::with_capacity(c * n);
    for m in 0..c {
        let plane = memberships.plane(m);
        let mass = window_sum(plane, w, h, config.window_radius);
        values.extend(
            plane
                .iter()
                .zip(&mass)
                .map(|(&u, &hm)| u.powf(p) * hm.powf(q)),
        );
    }
    for px in 0..n {
        let total: T = (0..c).map(|m| values[m * n + px]).sum();
        if !(total > T::zero()) {
            return Err(Error::Degenerate(format!(
                "pixel {} lost all membership mass",
                px
            )));
        }
        for m in 0..c {
            values[m * n + px] /= total;
        }
    }
    Ok(MembershipMatrix {
        clusters: c,
        width: w,
        height: h,
        values,
    })
}

/// FCM objective `J = Σ_n Σ_m μ_mn^L (i_n - v_m)^2`.
pub fn objective<T: Scalar>(
    image: &GrayImage<T>,
    memberships: &MembershipMatrix<T>,
    centers: &ClusterCenters<T>,
    fuzziness: f64,
) -> T {
    let l = T::cast(fuzziness);
    // compensated summation
    let (mut j, mut carry) = (T::zero(), T::zero());
    for (m, &v) in centers.0.iter().enumerate() {
        for (&u, &i) in memberships.plane(m).iter().zip(image.data()) {
            let d = i - v;
            let term = u.powf(l) * d * d;
            let t = j + term;
            carry += if j.abs() >= term.abs() {
                (j - t) + term
            } else {
                (term - t) + j
            };
            j = t;
        }
    }
    j + carry
}

#[derive(Debug, Clone)]
pub struct SfcmResult<T> {
    pub memberships: MembershipMatrix<T>,
    pub centers: ClusterCenters<T>,
    pub iterations: usize,
    /// `J(μ_t, v_t)` after each FCM sweep, before spatial refinement.
    pub objective_history: Vec<T>,
}

/// Cluster `image` starting from seeded random memberships.
pub fn sfcm_run<T: Scalar>(image: &GrayImage<T>, config: &SfcmConfig) -> Result<SfcmResult<T>> {
    config.validate()?;
    let init =
        MembershipMatrix::random(config.clusters, image.width(), image.height(), config.seed);
    sfcm_run_from(image, init, config)
}

/// Cluster `image` from explicit initial memberships.
pub fn sfcm_run_from<T: Scalar>(
    image: &GrayImage<T>,
    init: MembershipMatrix<T>,
    config: &SfcmConfig,
) -> Result<SfcmResult<T>> {
    config.validate()?;
    check_dims(image, &init)?;
    if init.clusters >= 2 {
        let (lo, hi) = image.min_max();
        if !(hi > lo) {
            return Err(Error::Degenerate(
                "cannot split a constant image into clusters".into(),
            ));
        }
    }
    let tol = T::cast(config.tol);
    let mut current = init;
    let mut history = Vec::new();
    let mut iterations = 0;
    while iterations < config.max_iter {
        let (fcm, v) = fcm_iterate(image, &current, config)?;
        history.push(objective(image, &fcm, &v, config.fuzziness));
        let refined = spatial_refine(&fcm, config)?;
        let delta = refined.max_abs_diff(&current);
        current = refined;
        iterations += 1;
        if delta < tol {
            break;
        }
    }
    let centers = centers(image, &current, config.fuzziness)?;
    Ok(SfcmResult {
        memberships: current,
        centers,
        iterations,
        objective_history: history,
    })
}

/// Index of the brightest cluster (lowest index on ties).
pub fn brightest_cluster<T: Scalar>(centers: &ClusterCenters<T>) -> usize {
    let mut best = 0;
    for (m, &v) in centers.0.iter().enumerate() {
        if v > centers.0[best] {
            best = m;
        }
    }
    best
}

/// Membership plane of the brightest cluster, as an image.
pub fn tumor_membership_map<T: Scalar>(
    memberships: &MembershipMatrix<T>,
    centers: &ClusterCenters<T>,
) -> GrayImage<T> {
    let m = brightest_cluster(centers);
    GrayImage::from_raw(
        memberships.width,
        memberships.height,
        memberships.plane(m).to_vec(),
    )
}
