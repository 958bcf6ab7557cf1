//! Numerical monodromy of a generic meromorphic connection: canonical
//! fundamental solutions on sectors via truncated formal series, Stokes
//! factors and matrices by short-arc parallel transport across anti-Stokes
//! rays, connection matrices along tentacle paths from a base point, the
//! cyclic product relation and the degree check.
//!
//! Exact multisummation is replaced by evaluating the truncated series at a
//! matching radius chosen from the first-dropped-term estimate; refinement
//! stability is the caller's surrogate for summability.

use crate::connection_model::{
    formal_diagonalize_series, validate, CompatibleFraming, FormalNormalForm,
    MeromorphicConnection,
};
use crate::error::{Error, Result};
use crate::matcore::{integrate_linear, mat_exp, CMatrix, PolylinePath};
use crate::series::MatSeries;
use crate::stokes_data::{anti_stokes, half_period_order, HalfPeriod, StokesMatrices};
use num_complex::Complex64 as C64;
use std::f64::consts::{PI, TAU};

/// Numerical knobs, all overridable from the CLI.
#[derive(Clone, Debug)]
pub struct NumericParams {
    /// Gauge-series order beyond the pole order: N = k + extra_orders.
    pub extra_orders: usize,
    /// Integrator tolerance per unit arclength.
    pub tol: f64,
    /// Acceptable first-dropped-term estimate at the matching radius.
    pub match_tol: f64,
    /// Largest tolerated off-support mass in a computed Stokes factor.
    pub support_tol: f64,
    /// Matching radius cap as a fraction of the distance to the nearest pole.
    pub radius_cap_frac: f64,
}

impl Default for NumericParams {
    fn default() -> Self {
        NumericParams {
            extra_orders: 5,
            tol: 1e-12,
            match_tol: 1e-11,
            support_tol: 1e-6,
            radius_cap_frac: 0.35,
        }
    }
}

/// Dominance separation 2 max|c_ij| / r^{k-1} targeted when choosing the
/// outer ray-crossing radius; e^{this} bounds the conditioning of a crossing.
const TARGET_CROSSING_SEPARATION: f64 = 7.5;

/// Cap on max_i |q_i| at the matching radius. Beyond e^25 or so the
/// integrator error injected near the pole is amplified past the 1e-7 level
/// even along the well-conditioned bisector channels.
const EXPONENT_CAP: f64 = 25.0;

/// Precomputed local data at one pole: truncated gauge series and its
/// inverse, normal form, anti-Stokes directions.
#[derive(Clone, Debug)]
pub struct PolePrep {
    pub ghat: MatSeries,
    pub fhat: MatSeries,
    pub nf: FormalNormalForm,
    pub aset: crate::stokes_data::AntiStokesSet,
    pub next_term_norm: f64,
    pub n_order: usize,
}

/// One tentacle arm: matching angle (a real lift fixing the log branch),
/// matching radius, and the path from the base point to the matching point.
#[derive(Clone, Debug)]
pub struct Arm {
    pub angle: f64,
    pub radius: f64,
    pub path: PolylinePath,
}

/// A full choice of tentacles.
#[derive(Clone, Debug)]
pub struct Tentacles {
    pub base_point: C64,
    pub arms: Vec<Arm>,
}

impl Tentacles {
    /// Follow the poles while keeping the base point, matching angles and
    /// radii fixed: the continuous deformation of this tentacle system along
    /// an isomonodromic family, under which raw monodromy data is constant.
    pub fn retarget(&self, positions: &[C64]) -> Result<Tentacles> {
        if positions.len() != self.arms.len() {
            return Err(Error::TentacleDegenerate { context: "retarget arity".into() });
        }
        let mut arms = Vec::with_capacity(self.arms.len());
        for (a, arm) in positions.iter().zip(self.arms.iter()) {
            let m = a + C64::from_polar(arm.radius, arm.angle);
            arms.push(Arm {
                angle: arm.angle,
                radius: arm.radius,
                path: PolylinePath::segment(self.base_point, m)?,
            });
        }
        Ok(Tentacles { base_point: self.base_point, arms })
    }
}

/// Sector labelling at a pole induced by a matching direction: lifted ray
/// angles theta_1 < ... < theta_r in (alpha - 2pi, alpha], so the matching
/// point sits in the last sector (theta_r, theta_1 + 2pi).
#[derive(Clone, Debug)]
pub struct SectorLabels {
    pub theta: Vec<f64>,
    pub hp: HalfPeriod,
}

impl SectorLabels {
    pub fn count(&self) -> usize {
        self.theta.len()
    }

    /// Open interval of sector j (1-based; j = r is the last sector).
    pub fn sector_interval(&self, j: usize) -> (f64, f64) {
        let r = self.count();
        if j < r {
            (self.theta[j - 1], self.theta[j])
        } else {
            (self.theta[r - 1], self.theta[0] + TAU)
        }
    }
}

/// Per-pole numerical Stokes output.
#[derive(Clone, Debug)]
pub struct PoleMonodromy {
    pub connection_matrix: CMatrix,
    pub stokes: StokesMatrices,
    /// Largest off-support entry removed from a Stokes factor.
    pub projection_defect: f64,
    /// First-dropped-term estimate at the matching radius.
    pub frame_error_estimate: f64,
}

/// Full monodromy data of a connection for a choice of tentacles.
#[derive(Clone, Debug)]
pub struct MonodromyData {
    pub poles: Vec<PoleMonodromy>,
    /// || rho_m ... rho_1 - 1 ||_F for the cyclic relation.
    pub relation_residual: f64,
    /// sum_i Tr Lambda'_i (must be ~ 0 for trivial-bundle inputs).
    pub degree: C64,
}

impl MonodromyData {
    /// rho_i = C_i^{-1} S_{2k-2} ... S_1 e^{2 pi i Lambda'} C_i.
    pub fn rho(&self, i: usize) -> CMatrix {
        let pm = &self.poles[i];
        let n = pm.connection_matrix.dim();
        let mut prod = CMatrix::identity(n);
        for s in &pm.stokes.s {
            prod = s * prod;
        }
        let m0p = mat_exp(&pm.stokes.lambda_prime.scale(C64::new(0.0, TAU)));
        let ci = &pm.connection_matrix;
        let ci_inv = ci.inverse().expect("connection matrix invertible");
        ci_inv * prod * m0p * ci
    }
}

pub fn degree_of(md: &MonodromyData) -> f64 {
    md.degree.re
}

/// Driver owning the validated connection, framings and per-pole preps.
pub struct MonodromyEngine<'a> {
    pub conn: &'a MeromorphicConnection,
    pub framings: CompatibleFraming,
    pub params: NumericParams,
    pub preps: Vec<PolePrep>,
}

impl<'a> MonodromyEngine<'a> {
    pub fn new(
        conn: &'a MeromorphicConnection,
        framings: CompatibleFraming,
        params: NumericParams,
    ) -> Result<Self> {
        let report = validate(conn);
        if !report.passes {
            return Err(Error::Invalid(format!(
                "connection fails validation: residue sum {:.3e}, poles: {}",
                report.residue_sum_norm,
                report
                    .poles
                    .iter()
                    .map(|p| p.detail.clone())
                    .collect::<Vec<_>>()
                    .join("; ")
            )));
        }
        framings.check(conn)?;
        let mut preps = Vec::with_capacity(conn.num_poles());
        for i in 0..conn.num_poles() {
            let k = conn.parts[i].order();
            let n_order = k + params.extra_orders;
            let local = conn.local_expansion(i, n_order as i32);
            let fg = formal_diagonalize_series(&local, &framings.framings[i], n_order)?;
            let fhat = fg.ghat.inverse_trunc(n_order as i32)?;
            let aset = anti_stokes(&fg.normal_form)?;
            preps.push(PolePrep {
                ghat: fg.ghat,
                fhat,
                nf: fg.normal_form,
                aset,
                next_term_norm: fg.next_term_norm,
                n_order,
            });
        }
        Ok(MonodromyEngine { conn, framings, params, preps })
    }

    fn coeff_fn(&self) -> impl Fn(C64) -> CMatrix + '_ {
        let n = self.conn.rank();
        move |z| match self.conn.evaluate(z) {
            Ok(m) => m,
            // force the step controller into underflow at a pole hit
            Err(_) => CMatrix::scalar(n, C64::new(1e300, 0.0)),
        }
    }

    /// Distance from pole i to the nearest other pole.
    fn pole_clearance(&self, i: usize) -> f64 {
        let a = self.conn.positions[i];
        self.conn
            .positions
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, b)| (a - b).norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest radius below the geometric cap whose first-dropped-term
    /// estimate clears `match_tol`, floored (for irregular poles) so the
    /// exponential factors of the frames stay within floating-point range.
    /// The achieved estimate must clear `support_tol`, the level at which it
    /// would contaminate the Stokes factors.
    pub fn matching_radius(&self, i: usize) -> Result<f64> {
        let prep = &self.preps[i];
        let k = self.conn.parts[i].order();
        let cap = if self.conn.num_poles() == 1 {
            1.0
        } else {
            self.params.radius_cap_frac * self.pole_clearance(i)
        };
        let cap = cap.min(1.5);

        // floor: sum_l max_c |q_{c,l}| r^{-l} <= EXPONENT_CAP
        let mut floor = 0.0f64;
        if k >= 2 {
            let coeff_norms: Vec<f64> = prep
                .nf
                .q_coeffs
                .iter()
                .map(|q| q.diagonal().iter().map(|x| x.norm()).fold(0.0, f64::max))
                .collect();
            let qmag = |r: f64| -> f64 {
                coeff_norms
                    .iter()
                    .enumerate()
                    .map(|(idx, c)| c / r.powi(idx as i32 + 1))
                    .sum()
            };
            let mut lo = 1e-9;
            let mut hi = cap;
            if qmag(lo) <= EXPONENT_CAP {
                floor = 0.0;
            } else if qmag(hi) > EXPONENT_CAP {
                floor = hi;
            } else {
                // qmag decreases in r: bracket the crossing qmag = CAP
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if qmag(mid) > EXPONENT_CAP {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                floor = hi;
            }
        }

        let mut r = cap;
        for _ in 0..64 {
            let est = prep.next_term_norm * r.powi(prep.n_order as i32 + 1);
            if est < self.params.match_tol || r * 0.75 < floor {
                break;
            }
            r *= 0.75;
        }
        let r = r.max(floor).min(cap);
        let est = prep.next_term_norm * r.powi(prep.n_order as i32 + 1);
        if est > self.params.support_tol {
            return Err(Error::MatchingUnreliable { estimate: est, tol: self.params.support_tol });
        }
        Ok(r)
    }

    /// Outer radius for crossing anti-Stokes rays: large enough that the
    /// dominance separation is mild, small enough to stay clear of the other
    /// poles. Crossing a ray close to the pole is exponentially
    /// ill-conditioned, so transports run out along a bisector, cross out
    /// there, and come back in ("dog-bone" legs).
    fn crossing_radius(&self, i: usize, r_in: f64) -> f64 {
        let prep = &self.preps[i];
        let k = self.conn.parts[i].order();
        if k < 2 {
            return r_in;
        }
        let n = self.conn.rank();
        let mut cmax = 0.0f64;
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    cmax = cmax.max(prep.nf.q_leading_gap(a, b).norm());
                }
            }
        }
        let needed = (2.0 * cmax / TARGET_CROSSING_SEPARATION).powf(1.0 / (k as f64 - 1.0));
        let cap = if self.conn.num_poles() == 1 {
            needed.max(1.0)
        } else {
            0.45 * self.pole_clearance(i)
        };
        needed.clamp(r_in, cap.max(r_in))
    }

    /// Dog-bone transport between sector bisectors: radially out, across the
    /// ray at the outer radius, radially back in.
    fn dog_bone(
        &self,
        center: C64,
        r_in: f64,
        r_out: f64,
        psi_from: f64,
        psi_to: f64,
    ) -> Result<PolylinePath> {
        if (r_out - r_in).abs() < 1e-12 * r_in.max(1.0) {
            return PolylinePath::arc(center, r_in, psi_from, psi_to, 0.12);
        }
        let leg_out = PolylinePath::segment(
            center + C64::from_polar(r_in, psi_from),
            center + C64::from_polar(r_out, psi_from),
        )?;
        let arc = PolylinePath::arc(center, r_out, psi_from, psi_to, 0.12)?;
        let leg_in = PolylinePath::segment(
            center + C64::from_polar(r_out, psi_to),
            center + C64::from_polar(r_in, psi_to),
        )?;
        leg_out.join(&arc)?.join(&leg_in)
    }

    /// Sector labelling at pole i induced by the lifted matching angle.
    pub fn sector_labels(&self, i: usize, angle_lift: f64) -> Result<SectorLabels> {
        let prep = &self.preps[i];
        let r = prep.aset.count();
        let base = angle_lift.rem_euclid(TAU);
        let hp = half_period_order(&prep.aset, base)?;
        let mut theta = Vec::with_capacity(r);
        for t in 0..r {
            let raw = prep.aset.directions[(hp.start + t) % r].angle;
            // lift into (angle_lift - 2pi, angle_lift]
            let th = raw + ((angle_lift - raw) / TAU).floor() * TAU;
            theta.push(th);
        }
        theta.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(SectorLabels { theta, hp })
    }

    /// Canonical frame Phi_j ~ Fhat(z) z^Lambda e^{Q(z)} of sector j at the
    /// given lifted angle and radius, plus the truncation estimate.
    /// For k = 1 there are no sectors and j is ignored.
    pub fn canonical_frame(
        &self,
        i: usize,
        labels: &SectorLabels,
        sector_j: usize,
        radius: f64,
        psi: f64,
    ) -> Result<(CMatrix, f64)> {
        let prep = &self.preps[i];
        if labels.count() > 0 {
            let (lo, hi) = labels.sector_interval(sector_j);
            if psi <= lo || psi >= hi {
                return Err(Error::Invalid(format!(
                    "angle {psi} outside sector {sector_j} = ({lo}, {hi})"
                )));
            }
        }
        let est = prep.next_term_norm * radius.powi(prep.n_order as i32 + 1);
        let gate = self.params.support_tol.max(10.0 * self.params.match_tol);
        if est > gate {
            return Err(Error::MatchingUnreliable { estimate: est, tol: gate });
        }
        let z_loc = C64::from_polar(radius, psi);
        let fhat_val = prep.fhat.eval(z_loc);
        let lam = prep.nf.lambda.diagonal();
        let log_z = C64::new(radius.ln(), psi);
        let zl: Vec<C64> = lam.iter().map(|l| (l * log_z).exp()).collect();
        let q_val = prep.nf.q_at(z_loc).diagonal();
        let eq: Vec<C64> = q_val.iter().map(|q| q.exp()).collect();
        let n = self.conn.rank();
        let mut frame = CMatrix::zeros(n);
        for r in 0..n {
            for c in 0..n {
                frame[(r, c)] = fhat_val[(r, c)] * zl[c] * eq[c];
            }
        }
        Ok((frame, est))
    }

    /// Inverse of a canonical frame computed analytically:
    /// e^{-Q} z^{-Lambda} ghat(z).
    fn canonical_frame_inv(&self, i: usize, radius: f64, psi: f64) -> CMatrix {
        let prep = &self.preps[i];
        let z_loc = C64::from_polar(radius, psi);
        let ghat_val = prep.ghat.eval(z_loc);
        let lam = prep.nf.lambda.diagonal();
        let log_z = C64::new(radius.ln(), psi);
        let q_val = prep.nf.q_at(z_loc).diagonal();
        let n = self.conn.rank();
        let mut out = CMatrix::zeros(n);
        for r in 0..n {
            let pref = (-(q_val[r]) - lam[r] * log_z).exp();
            for c in 0..n {
                out[(r, c)] = pref * ghat_val[(r, c)];
            }
        }
        out
    }

    /// M_0 = exp(2 pi i Lambda) at pole i.
    fn formal_monodromy(&self, i: usize) -> CMatrix {
        mat_exp(&self.preps[i].nf.lambda.scale(C64::new(0.0, TAU)))
    }

    /// Numerical Stokes matrices at pole i (k >= 2) for a matching direction.
    /// Returns the data plus the off-support projection defect.
    pub fn stokes_numeric(&self, i: usize, arm: &Arm) -> Result<(StokesMatrices, f64)> {
        let prep = &self.preps[i];
        let k = self.conn.parts[i].order();
        let n = self.conn.rank();
        let a_i = self.conn.positions[i];
        if k < 2 {
            return Ok((
                StokesMatrices {
                    s: vec![],
                    perm: (0..n).collect(),
                    lambda_prime: prep.nf.lambda.clone(),
                },
                0.0,
            ));
        }
        let labels = self.sector_labels(i, arm.angle)?;
        let r = labels.count();
        let coeff = self.coeff_fn();
        let radius = arm.radius;

        // sector bisectors: the dominance gaps close up there (Stokes-ray
        // side), which is where the subdominant mixing is actually readable
        let bisector = |j: usize| -> f64 {
            let (lo, hi) = labels.sector_interval(j);
            0.5 * (lo + hi)
        };

        let mut factors: Vec<CMatrix> = vec![CMatrix::identity(n); r];
        let mut defect = 0.0f64;
        let m0 = self.formal_monodromy(i);
        let m0_inv = m0.inverse()?;

        // continuing Phi_j from its bisector across the ray theta_{j+1} to the
        // next bisector yields the factor K_{j+1} attached to d_{j+1}; the
        // wrap crossing (j = r) carries the formal-monodromy correction and
        // yields K_1
        let r_out = self.crossing_radius(i, radius);
        for j in 1..=r {
            let psi_minus = bisector(j);
            let psi_plus = if j < r { bisector(j + 1) } else { bisector(1) + TAU };

            let (phi_before, _) = self.canonical_frame(i, &labels, j, radius, psi_minus)?;
            let arc = self.dog_bone(a_i, radius, r_out, psi_minus, psi_plus)?;
            let transported = integrate_linear(&coeff, &arc, &phi_before, self.params.tol)?;
            // the inverse frame is evaluated at the same point; for the wrap
            // ray the next sector's own branch is psi_plus - 2 pi
            let psi_eval = if j < r { psi_plus } else { psi_plus - TAU };
            let inv_frame = self.canonical_frame_inv(i, radius, psi_eval);
            let mut kfac = inv_frame * transported;
            if j == r {
                kfac = kfac * &m0_inv;
            }

            // project onto the crossed direction's group of Stokes factors
            let ray_index = (labels.hp.start + j) % r;
            let roots = &prep.aset.directions[ray_index].roots;
            for a in 0..n {
                for b in 0..n {
                    if a == b {
                        defect = defect.max((kfac[(a, b)] - C64::new(1.0, 0.0)).norm());
                        kfac[(a, b)] = C64::new(1.0, 0.0);
                    } else if !roots.contains(&(a, b)) {
                        defect = defect.max(kfac[(a, b)].norm());
                        kfac[(a, b)] = C64::new(0.0, 0.0);
                    }
                }
            }
            // slot t holds K_{t+1}
            factors[j % r] = kfac;
        }
        if defect > self.params.support_tol {
            return Err(Error::SupportViolation { mass: defect, tol: self.params.support_tol });
        }

        // S_i = P^{-1} K_{il} ... K_{(i-1)l+1} P
        let l = r / (2 * k - 2);
        let p = labels.hp.pmat.clone();
        let p_inv = p.transpose();
        let mut s_mats = Vec::with_capacity(2 * k - 2);
        for si in 1..=(2 * k - 2) {
            let mut prod = CMatrix::identity(n);
            for j in ((si - 1) * l + 1)..=(si * l) {
                prod = &factors[j - 1] * prod;
            }
            s_mats.push(&p_inv * prod * &p);
        }
        let lambda_prime = &p_inv * &prep.nf.lambda * &p;
        let sm = StokesMatrices { s: s_mats, perm: labels.hp.perm.clone(), lambda_prime };
        let tri = sm.triangularity_defect();
        if tri > self.params.support_tol.max(1e-8) {
            return Err(Error::SupportViolation { mass: tri, tol: self.params.support_tol });
        }
        Ok((sm, defect))
    }

    /// Direct loop-transport oracle: continue the last-sector canonical frame
    /// once around the pole and read the factor in that frame. The loop runs
    /// out to the crossing radius, circles there, and comes back.
    pub fn local_loop_transport(&self, i: usize, arm: &Arm) -> Result<CMatrix> {
        let labels = self.sector_labels(i, arm.angle)?;
        let r = labels.count();
        let a_i = self.conn.positions[i];
        let coeff = self.coeff_fn();
        let (frame, _) = if r > 0 {
            self.canonical_frame(i, &labels, r, arm.radius, arm.angle)?
        } else {
            self.canonical_frame(i, &labels, 1, arm.radius, arm.angle)?
        };
        let r_out = self.crossing_radius(i, arm.radius);
        let circle = self.dog_bone(a_i, arm.radius, r_out, arm.angle, arm.angle + TAU)?;
        let transported = integrate_linear(&coeff, &circle, &frame, self.params.tol)?;
        let inv = self.canonical_frame_inv(i, arm.radius, arm.angle);
        Ok(inv * transported)
    }

    /// Transport of the identity base frame along an arm.
    fn arm_transport(&self, arm: &Arm) -> Result<CMatrix> {
        let n = self.conn.rank();
        integrate_linear(self.coeff_fn(), &arm.path, &CMatrix::identity(n), self.params.tol)
    }

    /// Default tentacles: a distant base point along a viewing direction that
    /// maximally separates the poles, straight arms to last-sector matching
    /// points near the arrival direction.
    pub fn default_tentacles(&self) -> Result<Tentacles> {
        let m = self.conn.num_poles();
        let positions = &self.conn.positions;
        let centroid = positions.iter().sum::<C64>() / C64::new(m as f64, 0.0);
        let spread = positions
            .iter()
            .map(|a| (a - centroid).norm())
            .fold(0.0, f64::max)
            .max(1.0);

        // viewing direction maximising the smallest pairwise perpendicular
        // separation, so straight arms never crowd a foreign pole
        let mut best = (0.0f64, -1.0f64);
        for step in 0..180 {
            let th = PI * step as f64 / 180.0 + 0.0123;
            let u = C64::from_polar(1.0, th);
            let mut score = f64::INFINITY;
            for ii in 0..m {
                for jj in (ii + 1)..m {
                    let d = (positions[ii] - positions[jj]) * u.conj();
                    score = score.min(d.im.abs());
                }
            }
            if m == 1 {
                score = 1.0;
            }
            if score > best.1 {
                best = (th, score);
            }
        }
        let (theta0, score) = best;
        // arms travel roughly along e^{i theta0}; the score is the lateral
        // separation of the poles seen along that direction
        let base_point = centroid - C64::from_polar(6.0 * spread + 4.0, theta0);

        let mut radii = Vec::with_capacity(m);
        for i in 0..m {
            let mut radius = self.matching_radius(i)?;
            if m > 1 {
                radius = radius.min(0.3 * score);
            }
            radii.push(radius);
        }
        let mut arms = Vec::with_capacity(m);
        for i in 0..m {
            let a_i = positions[i];
            let alpha0 = (base_point - a_i).arg();
            let angle = self.pick_matching_angle(i, alpha0)?;
            let matching_point = a_i + C64::from_polar(radii[i], angle);
            let path = PolylinePath::segment(base_point, matching_point)?;
            for (j, b) in positions.iter().enumerate() {
                if j != i && path.distance_to(*b) < 1.3 * radii[j] {
                    return Err(Error::TentacleDegenerate {
                        context: format!("arm {i} passes too close to pole {j}"),
                    });
                }
            }
            arms.push(Arm { angle, radius: radii[i], path });
        }
        Ok(Tentacles { base_point, arms })
    }

    /// A matching angle near the arrival direction, pushed toward the bisector
    /// of its sector and kept off the bounding rays.
    fn pick_matching_angle(&self, i: usize, alpha0: f64) -> Result<f64> {
        let prep = &self.preps[i];
        let alpha = alpha0; // arg() is already principal
        if prep.aset.count() == 0 {
            return Ok(alpha);
        }
        let labels = match self.sector_labels(i, alpha) {
            Ok(l) => l,
            Err(Error::BaseOnRay { .. }) => self.sector_labels(i, alpha + 1e-6)?,
            Err(e) => return Err(e),
        };
        let r = labels.count();
        let (lo, hi) = labels.sector_interval(r);
        let bis = 0.5 * (lo + hi);
        let clamp_width = PI / 3.0;
        let mut target = bis.clamp(alpha - clamp_width, alpha + clamp_width);
        // keep a margin from the bounding rays
        let margin = 0.1 * (hi - lo);
        target = target.clamp(lo + margin, hi - margin);
        Ok(target)
    }

    /// Full monodromy data for the given tentacles. The composition order of
    /// the cyclic relation is repaired algebraically (loop rewriting) when the
    /// angular order of the arms at the base point differs from the pole
    /// labelling, so the product rho_m ... rho_1 is always the contractible
    /// one.
    pub fn monodromy_data(&self, tent: &Tentacles) -> Result<MonodromyData> {
        let m = self.conn.num_poles();
        let n = self.conn.rank();
        if tent.arms.len() != m {
            return Err(Error::TentacleDegenerate { context: "arm count".into() });
        }

        let mut stokes = Vec::with_capacity(m);
        let mut defects = Vec::with_capacity(m);
        let mut rho_arm = Vec::with_capacity(m);
        let mut estimates = Vec::with_capacity(m);
        for (i, arm) in tent.arms.iter().enumerate() {
            let (sm, defect) = self.stokes_numeric(i, arm)?;
            let labels = self.sector_labels(i, arm.angle)?;
            let r = labels.count();
            let sector = if r > 0 { r } else { 1 };
            let (_, est) = self.canonical_frame(i, &labels, sector, arm.radius, arm.angle)?;
            let inv_frame = self.canonical_frame_inv(i, arm.radius, arm.angle);
            let transport = self.arm_transport(arm)?;
            rho_arm.push(inv_frame * transport);
            stokes.push(sm);
            defects.push(defect);
            estimates.push(est);
        }

        // geometric loop values at the base point
        let loop_value = |i: usize| -> CMatrix {
            let p = stokes[i].pmat();
            let mut prod = CMatrix::identity(n);
            for s in &stokes[i].s {
                prod = s * prod;
            }
            let m0 = self.formal_monodromy(i);
            let beta = &p * prod * p.transpose() * m0;
            let ra_inv = rho_arm[i].inverse().expect("arm transport invertible");
            ra_inv * beta * &rho_arm[i]
        };
        let mut loops: Vec<CMatrix> = (0..m).map(loop_value).collect();

        // angular order of the arms around the base point, counterclockwise,
        // measured relative to the cone centre so the arg branch cut cannot
        // split the fan of arms
        let centroid = self.conn.positions.iter().sum::<C64>()
            / C64::new(m as f64, 0.0);
        let center = (centroid - tent.base_point).arg();
        let mut order: Vec<usize> = (0..m).collect();
        let angles: Vec<f64> = tent
            .arms
            .iter()
            .map(|arm| {
                let rel = (arm.path.end() - tent.base_point).arg() - center;
                (rel + PI).rem_euclid(TAU) - PI
            })
            .collect();
        order.sort_by(|&a, &b| angles[a].partial_cmp(&angles[b]).unwrap());

        // rewrite the relation word into label order, conjugating as we swap
        let mut conjugators: Vec<CMatrix> = vec![CMatrix::identity(n); m];
        let mut word = order.clone();
        loop {
            let mut swapped = false;
            for p in 0..m.saturating_sub(1) {
                if word[p] > word[p + 1] {
                    // product segment l_{w[p+1]} l_{w[p]}: move w[p+1] right:
                    // l_b l_a = (l_b l_a l_b^{-1}) l_b with b = w[p+1], a = w[p]
                    let b = word[p + 1];
                    let a = word[p];
                    let lb = loops[b].clone();
                    let lbi = lb.inverse().expect("loop invertible");
                    loops[a] = &lb * &loops[a] * &lbi;
                    conjugators[a] = &lb * &conjugators[a];
                    word.swap(p, p + 1);
                    swapped = true;
                }
            }
            if !swapped {
                break;
            }
        }

        let mut poles = Vec::with_capacity(m);
        for i in 0..m {
            let p_inv = stokes[i].pmat().transpose();
            let g_inv = conjugators[i].inverse()?;
            let c = &p_inv * &rho_arm[i] * g_inv;
            poles.push(PoleMonodromy {
                connection_matrix: c,
                stokes: stokes[i].clone(),
                projection_defect: defects[i],
                frame_error_estimate: estimates[i],
            });
        }

        let mut degree = C64::new(0.0, 0.0);
        for pm in &poles {
            degree += pm.stokes.lambda_prime.trace();
        }
        let md = MonodromyData { poles, relation_residual: 0.0, degree };
        let mut prod = CMatrix::identity(n);
        for i in 0..m {
            prod = md.rho(i) * prod;
        }
        let residual = (prod - CMatrix::identity(n)).norm_fro();
        Ok(MonodromyData { relation_residual: residual, ..md })
    }
}

/// Report of the torus-equivariance check.
#[derive(Clone, Debug)]
pub struct EquivarianceReport {
    pub c_deviation: f64,
    pub s_deviation: f64,
    pub lambda_deviation: f64,
}

/// Recompute the monodromy with framings twisted by diagonal t_i and verify
/// the data transforms by the torus action: C -> (P^{-1} t P) C and
/// S -> (P^{-1} t P) S (P^{-1} t P)^{-1} with Lambda' fixed.
pub fn torus_equivariance_check(
    conn: &MeromorphicConnection,
    framings: &CompatibleFraming,
    twists: &[CMatrix],
    params: &NumericParams,
) -> Result<EquivarianceReport> {
    let engine = MonodromyEngine::new(conn, framings.clone(), params.clone())?;
    let tent = engine.default_tentacles()?;
    let base = engine.monodromy_data(&tent)?;

    let twisted = CompatibleFraming {
        framings: framings
            .framings
            .iter()
            .zip(twists.iter())
            .map(|(g, t)| t * g)
            .collect(),
    };
    let engine2 = MonodromyEngine::new(conn, twisted, params.clone())?;
    let md2 = engine2.monodromy_data(&tent)?;

    let mut c_dev = 0.0f64;
    let mut s_dev = 0.0f64;
    let mut l_dev = 0.0f64;
    for i in 0..conn.num_poles() {
        let p = base.poles[i].stokes.pmat();
        let tp = p.transpose() * &twists[i] * &p;
        let want_c = &tp * &base.poles[i].connection_matrix;
        c_dev = c_dev.max((want_c - base_c(&md2, i)).norm_fro());
        let tp_inv = tp.inverse()?;
        for (s2, s1) in md2.poles[i].stokes.s.iter().zip(base.poles[i].stokes.s.iter()) {
            let want = &tp * s1 * &tp_inv;
            s_dev = s_dev.max((want - s2.clone()).norm_fro());
        }
        l_dev = l_dev.max(
            (md2.poles[i].stokes.lambda_prime.clone()
                - base.poles[i].stokes.lambda_prime.clone())
            .norm_fro(),
        );
    }
    Ok(EquivarianceReport { c_deviation: c_dev, s_deviation: s_dev, lambda_deviation: l_dev })
}

fn base_c(md: &MonodromyData, i: usize) -> CMatrix {
    md.poles[i].connection_matrix.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connection_model::PrincipalPart;
    use crate::sampling::Sampler;
    use crate::stokes_data::local_monodromy;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn scalar_two_pole_monodromy() {
        // n = 1, residues lambda and -lambda: rho values e^{+-2 pi i lambda}
        let lam = c(0.31, -0.12);
        let conn = MeromorphicConnection::new(
            vec![c(0.0, 0.0), c(1.5, 0.4)],
            vec![
                PrincipalPart::new(vec![CMatrix::diag(&[lam])]).unwrap(),
                PrincipalPart::new(vec![CMatrix::diag(&[-lam])]).unwrap(),
            ],
        )
        .unwrap();
        let framings = CompatibleFraming { framings: vec![CMatrix::identity(1); 2] };
        let engine = MonodromyEngine::new(&conn, framings, NumericParams::default()).unwrap();
        let tent = engine.default_tentacles().unwrap();
        let md = engine.monodromy_data(&tent).unwrap();
        assert!(md.relation_residual < 1e-10, "residual {}", md.relation_residual);
        let r0 = md.rho(0)[(0, 0)];
        let want = (c(0.0, TAU) * lam).exp();
        assert!((r0 - want).norm() < 1e-9, "{r0} vs {want}");
        assert!(degree_of(&md).abs() < 1e-10);
    }

    #[test]
    fn relation_residual_nonabelian_three_poles() {
        let mut smp = Sampler::new(7);
        let (conn, framings) = smp.simple_pole_connection(2, 3).unwrap();
        let engine = MonodromyEngine::new(&conn, framings, NumericParams::default()).unwrap();
        let tent = engine.default_tentacles().unwrap();
        let md = engine.monodromy_data(&tent).unwrap();
        assert!(md.relation_residual < 1e-8, "residual {}", md.relation_residual);
        assert!(degree_of(&md).abs() < 1e-8, "degree {}", degree_of(&md));
    }

    #[test]
    fn diagonal_connection_has_trivial_stokes() {
        // one diagonal order-2 pole plus a balancing diagonal simple pole
        let a2 = CMatrix::diag(&[c(1.0, 0.2), c(-0.7, -0.4)]);
        let a1 = CMatrix::diag(&[c(0.21, 0.0), c(-0.33, 0.1)]);
        let conn = MeromorphicConnection::new(
            vec![c(0.0, 0.0), c(2.0, 0.0)],
            vec![
                PrincipalPart::new(vec![a2, a1.clone()]).unwrap(),
                PrincipalPart::new(vec![a1.scale(c(-1.0, 0.0))]).unwrap(),
            ],
        )
        .unwrap();
        let framings = CompatibleFraming { framings: vec![CMatrix::identity(2); 2] };
        let engine = MonodromyEngine::new(&conn, framings, NumericParams::default()).unwrap();
        let tent = engine.default_tentacles().unwrap();
        let md = engine.monodromy_data(&tent).unwrap();
        assert!(md.relation_residual < 1e-8, "residual {}", md.relation_residual);
        for s in &md.poles[0].stokes.s {
            assert!((s.clone() - CMatrix::identity(2)).norm_max() < 1e-8);
        }
        // Lambda' = permuted Lambda = permuted residue for the diagonal pole
        let lam = md.poles[0].stokes.lambda();
        assert!((lam - a1).norm_max() < 1e-9);
        // connection matrices diagonal up to the permutation ambiguity
        let cmat = &md.poles[0].connection_matrix;
        let offd = cmat.offdiag_part().norm_max();
        let ond = cmat.diag_part().norm_max();
        assert!(offd < 1e-7 * ond.max(1.0) || ond < 1e-7 * offd, "C not monomial: {cmat:?}");
    }

    #[test]
    fn irregular_stokes_matches_loop_transport() {
        let mut smp = Sampler::new(17);
        let (conn, framings) = smp.irregular_plus_simple(2, 2).unwrap();
        let engine = MonodromyEngine::new(&conn, framings, NumericParams::default()).unwrap();
        let tent = engine.default_tentacles().unwrap();
        let (sm, defect) = engine.stokes_numeric(0, &tent.arms[0]).unwrap();
        assert!(defect < 1e-6, "projection defect {defect}");
        let loop_value = engine.local_loop_transport(0, &tent.arms[0]).unwrap();
        let formula = local_monodromy(&sm);
        let err = (loop_value - formula).norm_max();
        assert!(err < 1e-6, "loop vs formula: {err}");
    }

    #[test]
    fn frame_consistent_across_radii() {
        let mut smp = Sampler::new(27);
        let (conn, framings) = smp.irregular_plus_simple(2, 2).unwrap();
        let engine = MonodromyEngine::new(&conn, framings, NumericParams::default()).unwrap();
        let tent = engine.default_tentacles().unwrap();
        let arm = &tent.arms[0];
        let labels = engine.sector_labels(0, arm.angle).unwrap();
        let r_sect = labels.count();
        let (frame_r, _) = engine
            .canonical_frame(0, &labels, r_sect, arm.radius, arm.angle)
            .unwrap();
        let (frame_half, est) = engine
            .canonical_frame(0, &labels, r_sect, arm.radius / 2.0, arm.angle)
            .unwrap();
        // transport the outer frame inwards along the ray
        let a0 = conn.positions[0];
        let path = PolylinePath::segment(
            a0 + C64::from_polar(arm.radius, arm.angle),
            a0 + C64::from_polar(arm.radius / 2.0, arm.angle),
        )
        .unwrap();
        let coeff = |z: C64| conn.evaluate(z).unwrap();
        let transported = integrate_linear(coeff, &path, &frame_r, 1e-12).unwrap();
        let rel = (transported - frame_half.clone()).norm_fro() / frame_half.norm_fro();
        assert!(rel < 10.0 * engine.params.match_tol.max(est), "relative mismatch {rel}");
    }

    #[test]
    fn rank_one_irregular_pole_is_trivial() {
        // n = 1, k = 2, zero residue: no Stokes data, rho = 1
        let conn = MeromorphicConnection::new(
            vec![c(0.0, 0.0)],
            vec![PrincipalPart::new(vec![
                CMatrix::diag(&[c(1.3, -0.4)]),
                CMatrix::diag(&[c(0.0, 0.0)]),
            ])
            .unwrap()],
        )
        .unwrap();
        let framings = CompatibleFraming { framings: vec![CMatrix::identity(1)] };
        let engine = MonodromyEngine::new(&conn, framings, NumericParams::default()).unwrap();
        let tent = engine.default_tentacles().unwrap();
        let md = engine.monodromy_data(&tent).unwrap();
        assert!(md.poles[0].stokes.s.is_empty() || md.poles[0].stokes.s.iter().all(|s| (s.clone() - CMatrix::identity(1)).norm_max() < 1e-12));
        assert!(md.relation_residual < 1e-9, "residual {}", md.relation_residual);
        assert!(degree_of(&md).abs() < 1e-12);
    }

    #[test]
    fn torus_equivariance_scalar_and_generic() {
        let mut smp = Sampler::new(37);
        let (conn, framings) = smp.simple_pole_connection(2, 3).unwrap();
        let params = NumericParams::default();
        // identity twist: identical data
        let id = vec![CMatrix::identity(2); 3];
        let rep = torus_equivariance_check(&conn, &framings, &id, &params).unwrap();
        assert!(rep.c_deviation < 1e-9 && rep.s_deviation < 1e-9 && rep.lambda_deviation < 1e-12);
        // generic diagonal twists
        let twists: Vec<CMatrix> = (0..3)
            .map(|_| smp.diagonal_separated(2, 1.0, 0.3) + CMatrix::scalar(2, c(1.6, 0.0)))
            .collect();
        let rep = torus_equivariance_check(&conn, &framings, &twists, &params).unwrap();
        assert!(rep.c_deviation < 1e-8, "C deviation {}", rep.c_deviation);
        assert!(rep.s_deviation < 1e-8, "S deviation {}", rep.s_deviation);
        assert!(rep.lambda_deviation < 1e-10);
    }
}
