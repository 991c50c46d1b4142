//! End-to-end wiring: synthetic demand → observations → constrained demand
//! recovery → traffic assignment → training data → learned inverse model →
//! closed-loop evaluation, plus what-if transforms of the network.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dta::{run_dta, DtaError, DtaParams};
use crate::metrics::{
    build_hourly_report, group_sensors, grouped_errors, FlowErrors, LevelErrors, MetricsError,
};
use crate::network::{LinkId, NetworkError, RoadNetwork, ZoneId};
use crate::neural::{Dataset, NNModel, NeuralError};
use crate::odgen::{
    assemble_constraints, build_zero_mask, observation_from_matrix, solve_feasible_od,
    FlowObservation, ODMatrix, OdgenError, SolveOptions, ZeroMask,
};
use crate::textio::{format_kv_header, kv_header};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("demand profile: {0}")]
    InvalidProfile(String),
    #[error("scenario: {0}")]
    InvalidScenario(String),
    #[error("predictor {name}: {msg}")]
    Predictor { name: String, msg: String },
    #[error("dataset file {path}, line {line}: {msg}")]
    ParseLine {
        path: String,
        line: usize,
        msg: String,
    },
    #[error(transparent)]
    Odgen(#[from] OdgenError),
    #[error(transparent)]
    Dta(#[from] DtaError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Default hour-of-day demand multipliers: a morning and an evening peak
/// over a nonzero overnight floor, typical of terminal traffic.
pub const DIURNAL_24: [f64; 24] = [
    0.15, 0.10, 0.08, 0.08, 0.10, 0.20, 0.35, 0.55, 0.80, 0.95, 1.00, 0.95, 0.85, 0.80, 0.85,
    0.90, 1.00, 0.95, 0.80, 0.60, 0.45, 0.35, 0.25, 0.20,
];

/// Recipe for a synthetic demand history: a base rate per allowed OD pair,
/// an hour-of-day multiplier curve, and bounded multiplicative noise.
#[derive(Debug, Clone)]
pub struct SyntheticDemandProfile {
    /// Base hourly demand for each allowed OD pair.
    pub base_demand: BTreeMap<(ZoneId, ZoneId), f64>,
    pub diurnal: [f64; 24],
    pub days: u32,
    /// Relative noise amplitude a: each entry is scaled by U[1−a, 1+a].
    /// Must sit in [0, 1) so demand stays positive.
    pub noise_amplitude: f64,
    pub seed: u64,
}

impl SyntheticDemandProfile {
    /// A ready-to-run profile for the given network: every allowed pair
    /// gets a deterministic base rate in [60, 360) vehicles per hour.
    pub fn default_for(net: &RoadNetwork, seed: u64) -> SyntheticDemandProfile {
        let mask = build_zero_mask(net.zones());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut base_demand = BTreeMap::new();
        for &(i, j) in mask.free_entries() {
            base_demand.insert((i, j), rng.random_range(60.0..360.0));
        }
        SyntheticDemandProfile {
            base_demand,
            diurnal: DIURNAL_24,
            days: 30,
            noise_amplitude: 0.15,
            seed,
        }
    }

    fn validate(&self, mask: &ZeroMask) -> Result<(), PipelineError> {
        if self.days == 0 {
            return Err(PipelineError::InvalidProfile("days must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.noise_amplitude) {
            return Err(PipelineError::InvalidProfile(format!(
                "noise amplitude must be in [0, 1), got {}",
                self.noise_amplitude
            )));
        }
        if self.base_demand.is_empty() {
            return Err(PipelineError::InvalidProfile("no base demand".into()));
        }
        for (&(i, j), &d) in &self.base_demand {
            if mask.is_masked(i, j) {
                return Err(PipelineError::InvalidProfile(format!(
                    "base demand on structurally impossible pair {i} -> {j}"
                )));
            }
            if !(d.is_finite() && d >= 0.0) {
                return Err(PipelineError::InvalidProfile(format!(
                    "base demand for {i} -> {j} must be finite and >= 0, got {d}"
                )));
            }
        }
        for (h, &m) in self.diurnal.iter().enumerate() {
            if !(m.is_finite() && m > 0.0) {
                return Err(PipelineError::InvalidProfile(format!(
                    "diurnal multiplier for hour {h} must be positive, got {m}"
                )));
            }
        }
        Ok(())
    }
}

/// Draws the ground-truth demand history: one matrix per hour over
/// `profile.days` days, hour index running chronologically.
pub fn generate_ground_truth(
    net: &RoadNetwork,
    profile: &SyntheticDemandProfile,
) -> Result<Vec<ODMatrix>, PipelineError> {
    let mask = build_zero_mask(net.zones());
    profile.validate(&mask)?;
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed.wrapping_add(0x0D1A));
    let mut out = Vec::with_capacity(profile.days as usize * 24);
    for day in 0..profile.days {
        for h in 0..24u32 {
            let hour = day * 24 + h;
            let mut od = ODMatrix::zeros(&mask, hour);
            for (&(i, j), &base) in &profile.base_demand {
                let noise = 1.0
                    + rng.random_range(-profile.noise_amplitude..=profile.noise_amplitude);
                od.set_demand(i, j, base * profile.diurnal[h as usize] * noise)?;
            }
            out.push(od);
        }
    }
    Ok(out)
}

/// Zone-level flow totals implied by each demand matrix; by construction
/// the demand generator can reproduce these exactly.
pub fn observations_for(
    net: &RoadNetwork,
    matrices: &[ODMatrix],
) -> Result<Vec<FlowObservation>, PipelineError> {
    matrices
        .iter()
        .map(|od| Ok(observation_from_matrix(net.zones(), od)?))
        .collect()
}

/// Convergence bookkeeping for one assigned hour.
#[derive(Debug, Clone, Copy)]
pub struct AssignmentSummary {
    pub hour: u32,
    pub iterations_run: u32,
    pub converged: bool,
}

/// Everything produced while turning observations into training data.
#[derive(Debug, Clone)]
pub struct DatasetBuild {
    pub dataset: Dataset,
    /// Demand recovered from each hour's observation.
    pub od_matrices: Vec<ODMatrix>,
    pub assignments: Vec<AssignmentSummary>,
    /// Final solver objective per hour (residual of the flow constraints).
    pub solver_objectives: Vec<f64>,
}

/// Chronological split: the first ⌊n·5/6⌋ samples train, the rest test.
pub fn chronological_split(n: usize) -> (Vec<usize>, Vec<usize>) {
    let cut = n * 5 / 6;
    ((0..cut).collect(), (cut..n).collect())
}

/// For each hourly observation: recover a feasible demand matrix, assign
/// it to the network, and pair the resulting sensor flows (inputs) with
/// the recovered demand (targets).
pub fn build_dataset(
    net: &RoadNetwork,
    observations: &[FlowObservation],
    solve: &SolveOptions,
    dta: &DtaParams,
) -> Result<DatasetBuild, PipelineError> {
    if observations.is_empty() {
        return Err(PipelineError::InvalidProfile(
            "no observations to build from".into(),
        ));
    }
    let mask = build_zero_mask(net.zones());
    let mut inputs = Vec::with_capacity(observations.len());
    let mut targets = Vec::with_capacity(observations.len());
    let mut hours = Vec::with_capacity(observations.len());
    let mut od_matrices = Vec::with_capacity(observations.len());
    let mut assignments = Vec::with_capacity(observations.len());
    let mut objectives = Vec::with_capacity(observations.len());
    for obs in observations {
        let system = assemble_constraints(net.zones(), obs, &mask)?;
        let solved = solve_feasible_od(&system, &mask, obs.hour_index, solve)?;
        let od = solved.matrix;
        let result = run_dta(net, &od, dta)?;
        inputs.push(result.sensor_flows.clone());
        targets.push(od.vectorize());
        hours.push(obs.hour_index);
        assignments.push(AssignmentSummary {
            hour: obs.hour_index,
            iterations_run: result.iterations_run,
            converged: result.converged,
        });
        objectives.push(solved.objective);
        od_matrices.push(od);
    }
    let (train_indices, test_indices) = chronological_split(inputs.len());
    let dataset = Dataset {
        inputs,
        targets,
        hours,
        train_indices,
        test_indices,
    };
    dataset.validate()?;
    Ok(DatasetBuild {
        dataset,
        od_matrices,
        assignments,
        solver_objectives: objectives,
    })
}

/// Writes a dataset as one row per sample: hour, the input flows, then the
/// target demand vector.
pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<(), PipelineError> {
    dataset.validate()?;
    let mut out = Vec::new();
    let pairs = [
        ("samples", dataset.inputs.len().to_string()),
        ("inputs", dataset.inputs[0].len().to_string()),
        ("targets", dataset.targets[0].len().to_string()),
        ("train", dataset.train_indices.len().to_string()),
    ];
    writeln!(out, "{}", format_kv_header("flow-demand-dataset", &pairs))?;
    for ((x, t), hour) in dataset.inputs.iter().zip(&dataset.targets).zip(&dataset.hours) {
        let mut row = vec![hour.to_string()];
        row.extend(x.iter().map(|v| v.to_string()));
        row.extend(t.iter().map(|v| v.to_string()));
        writeln!(out, "{}", row.join(" "))?;
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset, PipelineError> {
    let text_path = path.display().to_string();
    let err = |line: usize, msg: String| PipelineError::ParseLine {
        path: text_path.clone(),
        line,
        msg,
    };
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| err(1, "empty file".into()))?;
    let header = header?;
    let fields = kv_header(&header, "flow-demand-dataset")
        .ok_or_else(|| err(1, "expected a flow-demand-dataset header".into()))?;
    let get = |key: &str| -> Result<usize, PipelineError> {
        fields
            .get(key)
            .and_then(|v| v.parse::<usize>().ok())
            .ok_or_else(|| err(1, format!("header needs a numeric `{key}`")))
    };
    let samples = get("samples")?;
    let n_in = get("inputs")?;
    let n_out = get("targets")?;
    let train = get("train")?;
    if train > samples {
        return Err(err(1, format!("train={train} exceeds samples={samples}")));
    }
    let mut inputs = Vec::with_capacity(samples);
    let mut targets = Vec::with_capacity(samples);
    let mut hours = Vec::with_capacity(samples);
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut values = trimmed.split_whitespace();
        let hour: u32 = values
            .next()
            .unwrap()
            .parse()
            .map_err(|e| err(lineno, format!("bad hour: {e}")))?;
        let rest: Vec<f64> = values
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|e| err(lineno, format!("bad value `{v}`: {e}")))
            })
            .collect::<Result<_, _>>()?;
        if rest.len() != n_in + n_out {
            return Err(err(
                lineno,
                format!("expected {} values, found {}", n_in + n_out, rest.len()),
            ));
        }
        inputs.push(rest[..n_in].to_vec());
        targets.push(rest[n_in..].to_vec());
        hours.push(hour);
    }
    if inputs.len() != samples {
        return Err(err(
            0,
            format!("header promised {samples} samples, file has {}", inputs.len()),
        ));
    }
    let dataset = Dataset {
        inputs,
        targets,
        hours,
        train_indices: (0..train).collect(),
        test_indices: (train..samples).collect(),
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Anything that maps a vector of sensor flows to a demand matrix.
pub trait OdPredictor {
    fn name(&self) -> &'static str;
    fn predict_od(
        &self,
        sensor_flows: &[f64],
        mask: &ZeroMask,
        hour: u32,
    ) -> Result<ODMatrix, PipelineError>;
}

impl OdPredictor for NNModel {
    fn name(&self) -> &'static str {
        "neural"
    }

    fn predict_od(
        &self,
        sensor_flows: &[f64],
        mask: &ZeroMask,
        hour: u32,
    ) -> Result<ODMatrix, PipelineError> {
        if sensor_flows.len() != self.input_size() {
            return Err(PipelineError::Predictor {
                name: "neural".into(),
                msg: format!(
                    "{} sensor flows for a model with {} inputs",
                    sensor_flows.len(),
                    self.input_size()
                ),
            });
        }
        if self.output_size() != mask.free_count() {
            return Err(PipelineError::Predictor {
                name: "neural".into(),
                msg: format!(
                    "model emits {} entries, mask allows {}",
                    self.output_size(),
                    mask.free_count()
                ),
            });
        }
        // The output layer's ReLU guarantees non-negative demand.
        let prediction = self.predict(sensor_flows);
        Ok(ODMatrix::from_vector(mask, hour, &prediction)?)
    }
}

/// Returns the stored demand of the training sample whose flows are
/// nearest (L2) to the query. With queries drawn from the stored set this
/// is an exact lookup, which makes it a reference point for closed-loop
/// checks: its round-trip error is the assignment's own reproducibility.
pub struct NearestOracle {
    flows: Vec<Vec<f64>>,
    demands: Vec<Vec<f64>>,
}

impl NearestOracle {
    pub fn from_dataset(dataset: &Dataset, indices: &[usize]) -> NearestOracle {
        NearestOracle {
            flows: indices.iter().map(|&i| dataset.inputs[i].clone()).collect(),
            demands: indices.iter().map(|&i| dataset.targets[i].clone()).collect(),
        }
    }
}

impl OdPredictor for NearestOracle {
    fn name(&self) -> &'static str {
        "nearest-oracle"
    }

    fn predict_od(
        &self,
        sensor_flows: &[f64],
        mask: &ZeroMask,
        hour: u32,
    ) -> Result<ODMatrix, PipelineError> {
        let mut best: Option<(f64, usize)> = None;
        for (i, stored) in self.flows.iter().enumerate() {
            if stored.len() != sensor_flows.len() {
                return Err(PipelineError::Predictor {
                    name: "nearest-oracle".into(),
                    msg: format!(
                        "query has {} flows, stored samples have {}",
                        sensor_flows.len(),
                        stored.len()
                    ),
                });
            }
            let d2: f64 = stored
                .iter()
                .zip(sensor_flows)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if best.map_or(true, |(b, _)| d2 < b) {
                best = Some((d2, i));
            }
        }
        let (_, idx) = best.ok_or_else(|| PipelineError::Predictor {
            name: "nearest-oracle".into(),
            msg: "no stored samples".into(),
        })?;
        Ok(ODMatrix::from_vector(mask, hour, &self.demands[idx])?)
    }
}

/// Ignores the flows and always predicts the mean training demand.
pub struct MeanOdBaseline {
    mean: Vec<f64>,
}

impl MeanOdBaseline {
    pub fn from_dataset(dataset: &Dataset, indices: &[usize]) -> MeanOdBaseline {
        let mut mean = vec![0.0; dataset.targets.first().map(|t| t.len()).unwrap_or(0)];
        for &i in indices {
            for (m, t) in mean.iter_mut().zip(&dataset.targets[i]) {
                *m += t;
            }
        }
        for m in mean.iter_mut() {
            *m /= indices.len().max(1) as f64;
        }
        MeanOdBaseline { mean }
    }
}

impl OdPredictor for MeanOdBaseline {
    fn name(&self) -> &'static str {
        "mean-baseline"
    }

    fn predict_od(
        &self,
        _sensor_flows: &[f64],
        mask: &ZeroMask,
        hour: u32,
    ) -> Result<ODMatrix, PipelineError> {
        Ok(ODMatrix::from_vector(mask, hour, &self.mean)?)
    }
}

/// Predicts zero demand everywhere; the weakest sane reference point.
pub struct ZeroOdBaseline;

impl OdPredictor for ZeroOdBaseline {
    fn name(&self) -> &'static str {
        "zero-baseline"
    }

    fn predict_od(
        &self,
        _sensor_flows: &[f64],
        mask: &ZeroMask,
        hour: u32,
    ) -> Result<ODMatrix, PipelineError> {
        Ok(ODMatrix::zeros(mask, hour))
    }
}

/// Round-trip evaluation of a predictor: sensor flows → predicted demand →
/// assignment → reproduced sensor flows, compared against the flows we
/// started from.
#[derive(Debug, Clone)]
pub struct ClosedLoopReport {
    pub predictor: String,
    pub hours: Vec<u32>,
    pub per_hour: Vec<FlowErrors>,
    pub mean_of_hours: FlowErrors,
    pub pooled: FlowErrors,
    /// Pooled errors per sensor flow level (low/medium/high by median
    /// reference flow over the evaluated hours).
    pub grouped: Vec<LevelErrors>,
}

pub fn closed_loop_eval(
    net: &RoadNetwork,
    predictor: &dyn OdPredictor,
    hours: &[u32],
    reference_flows: &[Vec<f64>],
    dta: &DtaParams,
) -> Result<ClosedLoopReport, PipelineError> {
    if hours.len() != reference_flows.len() {
        return Err(PipelineError::Predictor {
            name: predictor.name().into(),
            msg: format!(
                "{} hours but {} flow rows",
                hours.len(),
                reference_flows.len()
            ),
        });
    }
    let mask = build_zero_mask(net.zones());
    let mut reproduced = Vec::with_capacity(hours.len());
    for (&hour, flows) in hours.iter().zip(reference_flows) {
        let od = predictor.predict_od(flows, &mask, hour)?;
        let result = run_dta(net, &od, dta)?;
        reproduced.push(result.sensor_flows);
    }
    let report = build_hourly_report(hours, &reproduced, reference_flows)?;
    // Group sensors by their reference flow history over these hours.
    let n_sensors = net.sensors().len();
    let mut per_sensor: Vec<Vec<f64>> = vec![Vec::with_capacity(hours.len()); n_sensors];
    for row in reference_flows {
        for (series, &v) in per_sensor.iter_mut().zip(row) {
            series.push(v);
        }
    }
    let levels = group_sensors(&per_sensor)?;
    let grouped = grouped_errors(&reproduced, reference_flows, &levels)?;
    Ok(ClosedLoopReport {
        predictor: predictor.name().into(),
        hours: report.hours,
        per_hour: report.per_hour,
        mean_of_hours: report.mean_of_hours,
        pooled: report.pooled,
        grouped,
    })
}

/// Writes a closed-loop report in the same table style as the hourly
/// error report, with the per-level summary appended.
pub fn write_closed_loop_report(
    w: &mut dyn Write,
    report: &ClosedLoopReport,
) -> Result<(), PipelineError> {
    writeln!(
        w,
        "# closed-loop-report predictor={} hours={}",
        report.predictor,
        report.hours.len()
    )?;
    writeln!(w, "hour mse rmse rrmse_percent")?;
    let fmt_opt = |v: Option<f64>| match v {
        Some(x) => format!("{x:.4}"),
        None => "na".into(),
    };
    for (hour, e) in report.hours.iter().zip(&report.per_hour) {
        writeln!(w, "{hour} {:.4} {:.4} {}", e.mse, e.rmse, fmt_opt(e.rrmse_percent))?;
    }
    for (label, e) in [
        ("mean_of_hours", &report.mean_of_hours),
        ("pooled", &report.pooled),
    ] {
        writeln!(w, "{label} {:.4} {:.4} {}", e.mse, e.rmse, fmt_opt(e.rrmse_percent))?;
    }
    for g in &report.grouped {
        match g.errors {
            Some(e) => writeln!(
                w,
                "level_{} sensors={} {:.4} {:.4} {}",
                g.level.label(),
                g.sensor_count,
                e.mse,
                e.rmse,
                fmt_opt(e.rrmse_percent)
            )?,
            None => writeln!(
                w,
                "level_{} sensors={} na na na",
                g.level.label(),
                g.sensor_count
            )?,
        }
    }
    Ok(())
}

/// A what-if change to the network: scale selected link capacities down
/// (partial closures) and/or add a fixed money cost to selected links
/// (tolls, dwell charges). The input network is never modified.
#[derive(Debug, Clone, Default)]
pub struct ScenarioTransform {
    /// (link, factor) with factor in (0, 1].
    pub capacity_factors: Vec<(LinkId, f64)>,
    /// (link, added financial cost ≥ 0).
    pub extra_link_costs: Vec<(LinkId, f64)>,
}

pub fn apply_scenario(
    net: &RoadNetwork,
    scenario: &ScenarioTransform,
) -> Result<RoadNetwork, PipelineError> {
    let mut out = net.clone();
    for &(link, factor) in &scenario.capacity_factors {
        if !(factor.is_finite() && factor > 0.0 && factor <= 1.0) {
            return Err(PipelineError::InvalidScenario(format!(
                "capacity factor for {link} must be in (0, 1], got {factor}"
            )));
        }
        let l = out
            .link_mut(link)
            .ok_or_else(|| PipelineError::InvalidScenario(format!("unknown {link}")))?;
        l.capacity *= factor;
    }
    for &(link, extra) in &scenario.extra_link_costs {
        if !(extra.is_finite() && extra >= 0.0) {
            return Err(PipelineError::InvalidScenario(format!(
                "extra cost for {link} must be finite and >= 0, got {extra}"
            )));
        }
        let l = out
            .link_mut(link)
            .ok_or_else(|| PipelineError::InvalidScenario(format!("unknown {link}")))?;
        l.financial_cost += extra;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::odgen::FEASIBILITY_TOL;
    use crate::synth::demo_network;

    fn small_profile(net: &RoadNetwork, days: u32) -> SyntheticDemandProfile {
        SyntheticDemandProfile {
            days,
            ..SyntheticDemandProfile::default_for(net, 7)
        }
    }

    #[test]
    fn ground_truth_is_positive_and_deterministic() {
        let net = demo_network();
        let profile = small_profile(&net, 2);
        let a = generate_ground_truth(&net, &profile).unwrap();
        let b = generate_ground_truth(&net, &profile).unwrap();
        assert_eq!(a.len(), 48);
        assert_eq!(a, b);
        for (h, od) in a.iter().enumerate() {
            assert_eq!(od.hour_index, h as u32);
            assert!(od.total_demand() > 0.0);
            for &(i, j) in od.mask().free_entries() {
                assert!(od.demand(i, j) > 0.0, "hour {h}: {i}->{j} should be positive");
            }
        }
    }

    #[test]
    fn profile_validation_rejects_bad_settings() {
        let net = demo_network();
        let mut p = small_profile(&net, 1);
        p.noise_amplitude = 1.0;
        assert!(generate_ground_truth(&net, &p).is_err());
        let mut p = small_profile(&net, 1);
        p.days = 0;
        assert!(generate_ground_truth(&net, &p).is_err());
        let mut p = small_profile(&net, 1);
        p.diurnal[3] = 0.0;
        assert!(generate_ground_truth(&net, &p).is_err());
    }

    #[test]
    fn generated_observations_are_exactly_feasible() {
        let net = demo_network();
        let profile = small_profile(&net, 1);
        let truth = generate_ground_truth(&net, &profile).unwrap();
        let observations = observations_for(&net, &truth).unwrap();
        let mask = build_zero_mask(net.zones());
        for (od, obs) in truth.iter().zip(&observations) {
            let system = assemble_constraints(net.zones(), obs, &mask).unwrap();
            let objective = system.objective(&od.vectorize());
            assert!(objective < 1e-18, "hour {}: {objective}", obs.hour_index);
        }
    }

    #[test]
    fn build_dataset_recovers_demo_demand() {
        // The demo network's constraint system is square, so the recovered
        // demand must match the ground truth, not just the observations.
        let net = demo_network();
        let profile = small_profile(&net, 1);
        let truth = generate_ground_truth(&net, &profile).unwrap();
        let observations: Vec<_> = observations_for(&net, &truth).unwrap()[..12].to_vec();
        let build = build_dataset(
            &net,
            &observations,
            &SolveOptions::default(),
            &DtaParams::default(),
        )
        .unwrap();
        assert_eq!(build.dataset.inputs.len(), 12);
        assert_eq!(build.dataset.train_indices.len(), 10);
        assert_eq!(build.dataset.test_indices.len(), 2);
        assert_eq!(build.dataset.inputs[0].len(), net.sensors().len());
        for (od, truth_od) in build.od_matrices.iter().zip(&truth) {
            for &(i, j) in od.mask().free_entries() {
                let got = od.demand(i, j);
                let want = truth_od.demand(i, j);
                assert!(
                    (got - want).abs() < 1e-3 * want.max(1.0),
                    "{i}->{j}: {got} vs {want}"
                );
            }
        }
        for s in &build.assignments {
            assert!(s.converged, "hour {} did not converge", s.hour);
        }
        for &obj in &build.solver_objectives {
            assert!(obj <= FEASIBILITY_TOL, "solver objective {obj}");
        }
    }

    #[test]
    fn dataset_file_round_trip() {
        let net = demo_network();
        let profile = small_profile(&net, 1);
        let truth = generate_ground_truth(&net, &profile).unwrap();
        let observations: Vec<_> = observations_for(&net, &truth).unwrap()[..6].to_vec();
        let build = build_dataset(
            &net,
            &observations,
            &SolveOptions::default(),
            &DtaParams::default(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dataset.txt");
        save_dataset(&build.dataset, &path).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(build.dataset, loaded);
    }

    #[test]
    fn dataset_loader_rejects_ragged_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dataset.txt");
        std::fs::write(
            &path,
            "# flow-demand-dataset samples=1 inputs=2 targets=1 train=1\n0 1.0 2.0\n",
        )
        .unwrap();
        let err = load_dataset(&path).unwrap_err();
        assert!(matches!(err, PipelineError::ParseLine { .. }), "{err}");
    }

    #[test]
    fn zero_baseline_predicts_zero_and_mean_predicts_mean() {
        let net = demo_network();
        let mask = build_zero_mask(net.zones());
        let dataset = Dataset {
            inputs: vec![vec![1.0; 8], vec![3.0; 8]],
            targets: vec![vec![2.0; mask.free_count()], vec![4.0; mask.free_count()]],
            hours: vec![0, 1],
            train_indices: vec![0, 1],
            test_indices: vec![],
        };
        let zero = ZeroOdBaseline
            .predict_od(&dataset.inputs[0], &mask, 0)
            .unwrap();
        assert_eq!(zero.total_demand(), 0.0);
        let mean = MeanOdBaseline::from_dataset(&dataset, &dataset.train_indices);
        let od = mean.predict_od(&dataset.inputs[0], &mask, 0).unwrap();
        for &(i, j) in mask.free_entries() {
            assert!((od.demand(i, j) - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nearest_oracle_round_trips_training_hours() {
        let net = demo_network();
        let profile = small_profile(&net, 1);
        let truth = generate_ground_truth(&net, &profile).unwrap();
        let observations: Vec<_> = observations_for(&net, &truth).unwrap()[..8].to_vec();
        let dta = DtaParams::default();
        let build = build_dataset(&net, &observations, &SolveOptions::default(), &dta).unwrap();
        let all: Vec<usize> = (0..build.dataset.inputs.len()).collect();
        let oracle = NearestOracle::from_dataset(&build.dataset, &all);
        let report = closed_loop_eval(
            &net,
            &oracle,
            &build.dataset.hours,
            &build.dataset.inputs,
            &dta,
        )
        .unwrap();
        // Exact lookup plus a deterministic assignment reproduces the
        // reference flows outright.
        assert!(report.pooled.rmse < 1e-9, "pooled rmse {}", report.pooled.rmse);
        assert_eq!(report.per_hour.len(), 8);
    }

    #[test]
    fn closed_loop_zero_baseline_has_full_relative_error() {
        let net = demo_network();
        let profile = small_profile(&net, 1);
        let truth = generate_ground_truth(&net, &profile).unwrap();
        let observations: Vec<_> = observations_for(&net, &truth).unwrap()[..4].to_vec();
        let dta = DtaParams::default();
        let build = build_dataset(&net, &observations, &SolveOptions::default(), &dta).unwrap();
        let report = closed_loop_eval(
            &net,
            &ZeroOdBaseline,
            &build.dataset.hours,
            &build.dataset.inputs,
            &dta,
        )
        .unwrap();
        // Predicting zero demand leaves every sensor empty, so the root
        // error equals the root mean square of the reference flows, which
        // is at least their mean.
        assert!(report.pooled.rrmse_percent.unwrap() >= 100.0);
    }

    #[test]
    fn closed_loop_report_writes_all_sections() {
        let net = demo_network();
        let profile = small_profile(&net, 1);
        let truth = generate_ground_truth(&net, &profile).unwrap();
        let observations: Vec<_> = observations_for(&net, &truth).unwrap()[..3].to_vec();
        let dta = DtaParams::default();
        let build = build_dataset(&net, &observations, &SolveOptions::default(), &dta).unwrap();
        let report = closed_loop_eval(
            &net,
            &ZeroOdBaseline,
            &build.dataset.hours,
            &build.dataset.inputs,
            &dta,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_closed_loop_report(&mut buf, &report).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("predictor=zero-baseline"));
        assert!(text.contains("mean_of_hours "));
        assert!(text.contains("pooled "));
        assert!(text.contains("level_low"));
        assert!(text.contains("level_high"));
    }

    #[test]
    fn scenario_transform_copies_and_validates() {
        let net = demo_network();
        let scenario = ScenarioTransform {
            capacity_factors: vec![(LinkId(1), 0.5)],
            extra_link_costs: vec![(LinkId(8), 2.5)],
        };
        let before_cap = net.link(LinkId(1)).unwrap().capacity;
        let before_fee = net.link(LinkId(8)).unwrap().financial_cost;
        let transformed = apply_scenario(&net, &scenario).unwrap();
        assert_eq!(net.link(LinkId(1)).unwrap().capacity, before_cap);
        assert!((transformed.link(LinkId(1)).unwrap().capacity - before_cap * 0.5).abs() < 1e-12);
        assert!(
            (transformed.link(LinkId(8)).unwrap().financial_cost - (before_fee + 2.5)).abs()
                < 1e-12
        );

        let bad = ScenarioTransform {
            capacity_factors: vec![(LinkId(1), 0.0)],
            ..Default::default()
        };
        assert!(apply_scenario(&net, &bad).is_err());
        let bad = ScenarioTransform {
            capacity_factors: vec![(LinkId(99), 0.5)],
            ..Default::default()
        };
        assert!(apply_scenario(&net, &bad).is_err());
        let bad = ScenarioTransform {
            extra_link_costs: vec![(LinkId(1), -1.0)],
            ..Default::default()
        };
        assert!(apply_scenario(&net, &bad).is_err());
    }

    #[test]
    fn halved_capacity_raises_equilibrium_travel_time() {
        let net = demo_network();
        let profile = small_profile(&net, 1);
        let truth = generate_ground_truth(&net, &profile).unwrap();
        // Pick a daytime hour with meaningful load.
        let od = &truth[10];
        let dta = DtaParams::default();
        let base = run_dta(&net, od, &dta).unwrap();
        let squeezed = apply_scenario(
            &net,
            &ScenarioTransform {
                capacity_factors: vec![(LinkId(0), 0.25)],
                ..Default::default()
            },
        )
        .unwrap();
        let after = run_dta(&squeezed, od, &dta).unwrap();
        let pos = net.link_pos(LinkId(0)).unwrap();
        assert!(
            after.link_travel_times[pos] > base.link_travel_times[pos],
            "{} vs {}",
            after.link_travel_times[pos],
            base.link_travel_times[pos]
        );
    }
}
