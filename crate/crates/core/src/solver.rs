//! Zero-Doppler initial estimate and Levenberg–Marquardt Doppler-curve fit
//! over (latitude, longitude, altitude, clock offset, clock drift).

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::differential::{self, BaseClockModel, CorrectionReport, DifferentialError, ErrorSeries};
use crate::doppler_model::{self, ModelError, StateVector};
use crate::ephemeris::Ephemeris;
use crate::geodesy::{self, GeodeticPosition};
use crate::observations::{DopplerObservation, SatelliteRef, StationMeta};
use crate::orbits::{OrbitError, SatStateEcef};

/// Observations of one satellite further apart than this belong to different passes.
pub const PASS_GAP_S: f64 = 1200.0;
/// Zero crossings are clamped to the pass span widened by this margin.
pub const CROSSING_MARGIN_S: f64 = 600.0;
/// Fitted Doppler slopes below this magnitude carry no crossing information, Hz/s.
pub const MIN_CROSSING_SLOPE_HZ_S: f64 = 0.1;

const N_PARAMS: usize = 5;
const ALT: usize = 2;
const MAX_DAMPING: f64 = 1e20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("no satellite produced a usable zero-Doppler crossing")]
    NoCrossing,
    #[error("normal matrix is singular (condition estimate {condition:e})")]
    SingularNormalMatrix { condition: f64 },
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Differential(#[from] DifferentialError),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
}

/// Size of one scaled unit for each parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParameterScales {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    pub altitude_m: f64,
    pub clock_offset_hz: f64,
    pub clock_drift_hz_s: f64,
}

impl Default for ParameterScales {
    fn default() -> Self {
        Self { latitude_deg: 1e-5, longitude_deg: 1e-5, altitude_m: 100.0, clock_offset_hz: 10.0, clock_drift_hz_s: 0.1 }
    }
}

impl ParameterScales {
    fn as_array(&self) -> [f64; N_PARAMS] {
        [self.latitude_deg, self.longitude_deg, self.altitude_m, self.clock_offset_hz, self.clock_drift_hz_s]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Scaled step norm below which the fit has converged.
    pub step_tolerance: f64,
    /// Relative cost decrease below which the fit has converged.
    pub cost_tolerance: f64,
    pub initial_damping: f64,
    /// Hold altitude at this value (meters) and fit the other four parameters.
    pub fix_altitude: Option<f64>,
    pub parameter_scales: ParameterScales,
    /// Huber threshold on residuals, Hz.
    pub robust_loss_delta: Option<f64>,
    /// Per-station measurement sigma, Hz; residuals are weighted by 1/sigma.
    pub station_sigmas: BTreeMap<String, f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            step_tolerance: 1e-8,
            cost_tolerance: 1e-10,
            initial_damping: 1e-3,
            fix_altitude: None,
            parameter_scales: ParameterScales::default(),
            robust_loss_delta: None,
            station_sigmas: BTreeMap::new(),
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::InvalidOptions(m.to_string()));
        if self.max_iterations < 1 {
            return bad("max_iterations must be at least 1");
        }
        if !(self.step_tolerance > 0.0 && self.cost_tolerance > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.initial_damping > 0.0) {
            return bad("initial_damping must be positive");
        }
        if self.parameter_scales.as_array().iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return bad("parameter scales must be positive");
        }
        if let Some(d) = self.robust_loss_delta {
            if !(d > 0.0) {
                return bad("robust_loss_delta must be positive");
            }
        }
        if self.station_sigmas.values().any(|s| !(*s > 0.0 && s.is_finite())) {
            return bad("station sigmas must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrossingMethod {
    Interpolated,
    Extrapolated,
}

/// Estimated zero-Doppler instant of one satellite and its sub-satellite point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroCrossing {
    pub norad_id: u32,
    pub crossing_time: f64,
    pub method: CrossingMethod,
    pub sat_subpoint: GeodeticPosition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialEstimate {
    pub position: GeodeticPosition,
    pub crossings: Vec<ZeroCrossing>,
}

/// One fitted observation, in the form used for residual plots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub norad_id: u32,
    pub time: f64,
    pub measured_doppler_hz: f64,
    pub predicted_doppler_hz: f64,
    pub residual_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub state: StateVector,
    pub converged: bool,
    /// Linear solves attempted, accepted or not.
    pub iterations: usize,
    pub final_rmse: f64,
    /// Unweighted residuals (measured − predicted), Hz, in observation order.
    pub residuals: Vec<f64>,
    /// Parameter covariance in physical units (deg, deg, m, Hz, Hz/s), from
    /// the damped normal matrix at the solution. Informational.
    pub covariance_estimate: [[f64; N_PARAMS]; N_PARAMS],
    /// Largest over smallest eigenvalue of the normal matrix; None when singular.
    pub condition_estimate: Option<f64>,
    pub per_satellite_counts: BTreeMap<u32, usize>,
    /// Cost after each accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
    pub initial_estimate: Option<InitialEstimate>,
    pub fit_points: Vec<FitPoint>,
    pub warnings: Vec<String>,
}

impl SolveResult {
    pub fn position(&self) -> GeodeticPosition {
        self.state.position()
    }
}

/// Splits one satellite's time-sorted samples into passes at large gaps.
fn split_passes(samples: &[(f64, f64)]) -> Vec<&[(f64, f64)]> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..samples.len() {
        if samples[i].0 - samples[i - 1].0 > PASS_GAP_S {
            out.push(&samples[start..i]);
            start = i;
        }
    }
    if !samples.is_empty() {
        out.push(&samples[start..]);
    }
    out
}

/// Least-squares line through (t, doppler); returns the root and the slope.
fn linear_root(samples: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = samples.len() as f64;
    let tc = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let fc = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let (mut stt, mut stf) = (0.0, 0.0);
    for &(t, f) in samples {
        stt += (t - tc) * (t - tc);
        stf += (t - tc) * (f - fc);
    }
    if !(stt > 0.0) {
        return None;
    }
    let slope = stf / stt;
    Some((tc - fc / slope, slope))
}

/// Zero-Doppler crossings per satellite and the mean of their sub-satellite points.
pub fn initial_estimate(obs: &[DopplerObservation], ephemeris: &dyn Ephemeris) -> Result<InitialEstimate, SolverError> {
    let mut by_sat: BTreeMap<u32, Vec<(f64, f64)>> = BTreeMap::new();
    for o in obs {
        if let SatelliteRef::Norad(n) = o.sat {
            by_sat.entry(n).or_default().push((o.time, o.doppler()));
        }
    }
    by_sat.retain(|_, v| v.len() >= 2);
    if by_sat.is_empty() {
        return Err(SolverError::InsufficientData("no satellite has two or more observations".into()));
    }

    let mut crossings = Vec::new();
    for (&norad_id, samples) in &mut by_sat {
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        let centroid = samples.iter().map(|s| s.0).sum::<f64>() / samples.len() as f64;
        let mut best: Option<(f64, CrossingMethod)> = None;
        for pass in split_passes(samples) {
            let Some((root, slope)) = linear_root(pass) else { continue };
            if !(slope.abs() >= MIN_CROSSING_SLOPE_HZ_S) || !root.is_finite() {
                continue;
            }
            let (first, last) = (pass[0].0, pass[pass.len() - 1].0);
            let method =
                if (first..=last).contains(&root) { CrossingMethod::Interpolated } else { CrossingMethod::Extrapolated };
            let t = root.clamp(first - CROSSING_MARGIN_S, last + CROSSING_MARGIN_S);
            if best.is_none_or(|(b, _)| (t - centroid).abs() < (b - centroid).abs()) {
                best = Some((t, method));
            }
        }
        let Some((crossing_time, method)) = best else { continue };
        let sat = ephemeris.state(norad_id, crossing_time)?;
        let mut sub = geodesy::ecef_to_geodetic(sat.position).map_err(ModelError::from)?;
        sub.altitude_m = 0.0;
        crossings.push(ZeroCrossing { norad_id, crossing_time, method, sat_subpoint: sub });
    }
    if crossings.is_empty() {
        return Err(SolverError::NoCrossing);
    }

    let n = crossings.len() as f64;
    let lat = crossings.iter().map(|c| c.sat_subpoint.latitude_deg).sum::<f64>() / n;
    let (s, c) = crossings.iter().fold((0.0, 0.0), |(s, c), z| {
        let l = z.sat_subpoint.longitude_deg.to_radians();
        (s + l.sin(), c + l.cos())
    });
    let lon = if s == 0.0 && c == 0.0 { 0.0 } else { geodesy::wrap_longitude(s.atan2(c).to_degrees()) };
    Ok(InitialEstimate { position: GeodeticPosition { latitude_deg: lat, longitude_deg: lon, altitude_m: 0.0 }, crossings })
}

/// Brings latitude back into [−90, 90] across a pole and wraps longitude.
fn normalize(p: &mut [f64; N_PARAMS]) {
    if p[0] > 90.0 {
        p[0] = 180.0 - p[0];
        p[1] += 180.0;
    } else if p[0] < -90.0 {
        p[0] = -180.0 - p[0];
        p[1] += 180.0;
    }
    p[1] = geodesy::wrap_longitude(p[1]);
}

struct Problem<'a> {
    obs: &'a [DopplerObservation],
    states: &'a [SatStateEcef],
    /// Squared station weights 1/σ².
    weights2: Vec<f64>,
    reference_epoch: f64,
    huber: Option<f64>,
    scales: [f64; N_PARAMS],
    free: Vec<usize>,
}

impl Problem<'_> {
    fn state(&self, p: &[f64; N_PARAMS]) -> StateVector {
        StateVector {
            latitude_deg: p[0],
            longitude_deg: p[1],
            altitude_m: p[2],
            clock_offset_hz: p[3],
            clock_drift_hz_s: p[4],
            reference_epoch: self.reference_epoch,
        }
    }

    fn residuals(&self, p: &[f64; N_PARAMS]) -> Result<Vec<f64>, ModelError> {
        doppler_model::residuals_with_states(&self.state(p), self.obs, self.states)
    }

    fn cost(&self, r: &[f64]) -> f64 {
        0.5 * r
            .iter()
            .zip(&self.weights2)
            .map(|(r, w2)| {
                let a = r.abs();
                w2 * match self.huber {
                    Some(d) if a > d => 2.0 * d * a - d * d,
                    _ => a * a,
                }
            })
            .sum::<f64>()
    }

    /// Per-row factor sqrt(w²·u) with u the Huber IRLS weight.
    fn row_factors(&self, r: &[f64]) -> Vec<f64> {
        r.iter()
            .zip(&self.weights2)
            .map(|(r, w2)| {
                let u = match self.huber {
                    Some(d) if r.abs() > d => d / r.abs(),
                    _ => 1.0,
                };
                (w2 * u).sqrt()
            })
            .collect()
    }

    /// d(residual)/d(scaled parameter) for the free parameters.
    fn jacobian(&self, p: &[f64; N_PARAMS]) -> Result<DMatrix<f64>, ModelError> {
        let n = self.obs.len();
        let mut j = DMatrix::zeros(n, self.free.len());
        for (col, &k) in self.free.iter().enumerate() {
            match k {
                3 => {
                    for i in 0..n {
                        j[(i, col)] = -self.scales[3];
                    }
                }
                4 => {
                    for (i, o) in self.obs.iter().enumerate() {
                        j[(i, col)] = -self.scales[4] * (o.time - self.reference_epoch);
                    }
                }
                _ => {
                    let mut plus = *p;
                    let mut minus = *p;
                    plus[k] += self.scales[k];
                    minus[k] -= self.scales[k];
                    normalize(&mut plus);
                    normalize(&mut minus);
                    let rp = self.residuals(&plus)?;
                    let rm = self.residuals(&minus)?;
                    for i in 0..n {
                        j[(i, col)] = (rp[i] - rm[i]) / 2.0;
                    }
                }
            }
        }
        Ok(j)
    }

    fn normal_equations(&self, p: &[f64; N_PARAMS], r: &[f64]) -> Result<(DMatrix<f64>, DVector<f64>), ModelError> {
        let mut j = self.jacobian(p)?;
        let f = self.row_factors(r);
        let mut rw = DVector::from_column_slice(r);
        for i in 0..r.len() {
            j.row_mut(i).scale_mut(f[i]);
            rw[i] *= f[i];
        }
        let jt = j.transpose();
        Ok((&jt * &j, &jt * rw))
    }
}

fn condition_number(a: &DMatrix<f64>) -> Option<f64> {
    let eig = SymmetricEigen::new(a.clone()).eigenvalues;
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    (min > 0.0 && max.is_finite()).then(|| max / min)
}

fn damped(a: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let mut m = a.clone();
    for i in 0..a.nrows() {
        m[(i, i)] += lambda * a[(i, i)];
    }
    m
}

/// Levenberg–Marquardt fit starting from `initial`.
pub fn fit_state(
    obs: &[DopplerObservation],
    ephemeris: &dyn Ephemeris,
    initial: &StateVector,
    options: &SolverOptions,
) -> Result<SolveResult, SolverError> {
    let states = doppler_model::resolve_states(obs, ephemeris)?;
    fit_state_with_states(obs, &states, initial, options)
}

/// [`fit_state`] with satellite states already resolved (`states[i]` for `obs[i]`).
pub fn fit_state_with_states(
    obs: &[DopplerObservation],
    states: &[SatStateEcef],
    initial: &StateVector,
    options: &SolverOptions,
) -> Result<SolveResult, SolverError> {
    options.validate()?;
    let free: Vec<usize> = (0..N_PARAMS).filter(|&k| !(k == ALT && options.fix_altitude.is_some())).collect();
    if obs.len() < free.len() {
        return Err(SolverError::InsufficientData(format!(
            "{} observations for {} parameters",
            obs.len(),
            free.len()
        )));
    }
    let first_time = obs[0].time;
    if obs.iter().all(|o| o.time == first_time) {
        return Err(SolverError::InsufficientData("all observations share one timestamp".into()));
    }

    let mut warnings = Vec::new();
    let mut per_satellite_counts: BTreeMap<u32, usize> = BTreeMap::new();
    for (i, o) in obs.iter().enumerate() {
        *per_satellite_counts.entry(doppler_model::observation_norad(o, i)?).or_default() += 1;
    }
    if obs.len() < 6 {
        warnings.push(format!("only {} observations", obs.len()));
    }
    if per_satellite_counts.len() < 2 {
        warnings.push("single satellite: geometry is weak".into());
    }

    let problem = Problem {
        obs,
        states,
        weights2: obs
            .iter()
            .map(|o| options.station_sigmas.get(&o.station_id).map_or(1.0, |s| 1.0 / (s * s)))
            .collect(),
        reference_epoch: initial.reference_epoch,
        huber: options.robust_loss_delta,
        scales: options.parameter_scales.as_array(),
        free,
    };

    let mut p = [
        initial.latitude_deg,
        initial.longitude_deg,
        options.fix_altitude.unwrap_or(initial.altitude_m),
        initial.clock_offset_hz,
        initial.clock_drift_hz_s,
    ];
    normalize(&mut p);
    let mut r = problem.residuals(&p)?;
    let mut cost = problem.cost(&r);
    let mut cost_history = vec![cost];
    let mut lambda = options.initial_damping;
    let mut iterations = 0;
    let mut converged = false;
    let k = problem.free.len();

    'outer: while iterations < options.max_iterations {
        let (a, g) = problem.normal_equations(&p, &r)?;
        if (0..k).any(|i| !(a[(i, i)] > 0.0)) {
            return Err(SolverError::SingularNormalMatrix { condition: f64::INFINITY });
        }
        loop {
            iterations += 1;
            let Some(chol) = damped(&a, lambda).cholesky() else {
                lambda *= 10.0;
                if lambda > MAX_DAMPING {
                    return Err(SolverError::SingularNormalMatrix {
                        condition: condition_number(&a).unwrap_or(f64::INFINITY),
                    });
                }
                if iterations >= options.max_iterations {
                    break 'outer;
                }
                continue;
            };
            let step = chol.solve(&(-&g));
            let step_norm = step.norm();
            let mut trial = p;
            for (c, &idx) in problem.free.iter().enumerate() {
                trial[idx] += step[c] * problem.scales[idx];
            }
            normalize(&mut trial);
            let r_new = problem.residuals(&trial)?;
            let cost_new = problem.cost(&r_new);
            if cost_new <= cost {
                let rel = if cost > 0.0 { (cost - cost_new) / cost } else { 0.0 };
                p = trial;
                r = r_new;
                cost = cost_new;
                cost_history.push(cost);
                lambda = (lambda / 10.0).max(1e-15);
                if step_norm < options.step_tolerance || rel < options.cost_tolerance || cost == 0.0 {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            lambda *= 10.0;
            if step_norm < options.step_tolerance || lambda > MAX_DAMPING {
                // no representable improvement left
                converged = step_norm < options.step_tolerance;
                break 'outer;
            }
            if iterations >= options.max_iterations {
                break 'outer;
            }
        }
    }
    if !converged {
        warnings.push(format!("did not converge within {} iterations", options.max_iterations));
    }

    let (a, _) = problem.normal_equations(&p, &r)?;
    let condition_estimate = condition_number(&a);
    match condition_estimate {
        Some(c) if c > 1e12 => warnings.push(format!("poorly conditioned geometry (condition {c:.2e})")),
        None => warnings.push("normal matrix is singular at the solution".into()),
        _ => {}
    }
    let dof = obs.len().saturating_sub(k).max(1) as f64;
    let s2 = 2.0 * cost / dof;
    let mut covariance_estimate = [[0.0; N_PARAMS]; N_PARAMS];
    if let Some(inv) = damped(&a, lambda).try_inverse() {
        for (ci, &i) in problem.free.iter().enumerate() {
            for (cj, &j) in problem.free.iter().enumerate() {
                covariance_estimate[i][j] = inv[(ci, cj)] * s2 * problem.scales[i] * problem.scales[j];
            }
        }
    }

    let state = problem.state(&p);
    if let Err(e) = state.validate() {
        warnings.push(format!("solution outside valid range: {e}"));
    }
    let fit_points = obs
        .iter()
        .zip(&r)
        .map(|(o, &res)| FitPoint {
            norad_id: o.sat.norad().unwrap_or_default(),
            time: o.time,
            measured_doppler_hz: o.doppler(),
            predicted_doppler_hz: o.doppler() - res,
            residual_hz: res,
        })
        .collect();
    Ok(SolveResult {
        state,
        converged,
        iterations,
        final_rmse: doppler_model::doppler_rmse(&r)?,
        residuals: r,
        covariance_estimate,
        condition_estimate,
        per_satellite_counts,
        cost_history,
        initial_estimate: None,
        fit_points,
        warnings,
    })
}

fn matched_only(obs: &[DopplerObservation], warnings: &mut Vec<String>) -> Vec<DopplerObservation> {
    let out: Vec<DopplerObservation> = obs.iter().filter(|o| o.sat != SatelliteRef::Unmatched).cloned().collect();
    if out.len() < obs.len() {
        warnings.push(format!("{} unmatched observations excluded", obs.len() - out.len()));
    }
    out
}

/// Starting state for a solve: the initial estimate, zero clock, t_ref at the first observation.
pub fn starting_state(obs: &[DopplerObservation], init: &InitialEstimate, options: &SolverOptions) -> StateVector {
    let t_ref = obs.iter().map(|o| o.time).fold(f64::INFINITY, f64::min);
    let mut s = StateVector::from_position(&init.position, t_ref);
    s.altitude_m = options.fix_altitude.unwrap_or(0.0);
    s
}

/// Initial estimate followed by a fit on the raw rover observations.
pub fn solve_standalone(
    rover_obs: &[DopplerObservation],
    ephemeris: &dyn Ephemeris,
    options: &SolverOptions,
) -> Result<SolveResult, SolverError> {
    let mut warnings = Vec::new();
    let obs = matched_only(rover_obs, &mut warnings);
    let init = initial_estimate(&obs, ephemeris)?;
    let start = starting_state(&obs, &init, options);
    let mut result = fit_state(&obs, ephemeris, &start, options)?;
    result.initial_estimate = Some(init);
    warnings.append(&mut result.warnings);
    result.warnings = warnings;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DifferentialOptions {
    pub max_extrapolation_s: f64,
    /// Estimate a constant base clock offset from the error series instead of using `base_clock`.
    pub estimate_base_clock: bool,
    pub base_clock: BaseClockModel,
}

impl Default for DifferentialOptions {
    fn default() -> Self {
        Self {
            max_extrapolation_s: differential::DEFAULT_MAX_EXTRAPOLATION_S,
            estimate_base_clock: false,
            base_clock: BaseClockModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialSolution {
    pub result: SolveResult,
    pub report: CorrectionReport,
    pub series: BTreeMap<u32, ErrorSeries>,
    /// The corrected rover observations the fit used.
    pub corrected: Vec<DopplerObservation>,
}

/// Base error series, rover corrections, then the standalone pipeline on the corrected data.
pub fn solve_differential(
    rover_obs: &[DopplerObservation],
    base_obs: &[DopplerObservation],
    base_station: &StationMeta,
    ephemeris: &dyn Ephemeris,
    options: &SolverOptions,
    diff: &DifferentialOptions,
) -> Result<DifferentialSolution, SolverError> {
    let mut warnings = Vec::new();
    let base = matched_only(base_obs, &mut warnings);
    let rover = matched_only(rover_obs, &mut warnings);
    let mut series = differential::compute_base_error_series(&base, base_station, ephemeris, &diff.base_clock)?;
    if diff.estimate_base_clock {
        let clock = differential::estimate_base_clock(&series);
        for s in series.values_mut() {
            for p in &mut s.samples {
                p.error_hz -= clock.at(p.time);
            }
        }
        warnings.push(format!("estimated base clock offset {:.3} Hz", clock.offset_hz));
    }
    let (corrected, report) = differential::apply_corrections(&rover, &series, diff.max_extrapolation_s)?;
    if report.uncorrectable() > 0 {
        warnings.push(format!("{} rover observations could not be corrected", report.uncorrectable()));
    }
    let mut result = solve_standalone(&corrected, ephemeris, options)?;
    warnings.append(&mut result.warnings);
    result.warnings = warnings;
    Ok(DifferentialSolution { result, report, series, corrected })
}

pub const RESIDUAL_COLUMNS: [&str; 5] = ["norad_id", "time_unix_s", "f_meas_hz", "f_pred_hz", "residual_hz"];

/// Measured Doppler, predicted Doppler and residual per fitted observation.
pub fn write_residuals<W: Write>(writer: W, points: &[FitPoint]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RESIDUAL_COLUMNS)?;
    for p in points {
        w.write_record([
            p.norad_id.to_string(),
            p.time.to_string(),
            p.measured_doppler_hz.to_string(),
            p.predicted_doppler_hz.to_string(),
            p.residual_hz.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
