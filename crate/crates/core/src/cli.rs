//! Command-line interface: each subcommand wraps one stage of the
//! observation → demand → assignment → model pipeline so stages can be run
//! and inspected independently.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{load_config, AppConfig};
use crate::dta::{run_dta, save_sensor_flows, HourlyFlows};
use crate::metrics::{build_hourly_report, write_report};
use crate::network::{load_network, save_network, LinkId, RoadNetwork};
use crate::neural::{evaluate_nn, train, NNModel};
use crate::odgen::{
    assemble_constraints, build_zero_mask, load_observations, load_od_matrices,
    save_observations, save_od_matrices, solve_feasible_od,
};
use crate::pipeline::{
    apply_scenario, build_dataset, closed_loop_eval, generate_ground_truth, load_dataset,
    observations_for, save_dataset, write_closed_loop_report, MeanOdBaseline, NearestOracle,
    OdPredictor, ScenarioTransform, SyntheticDemandProfile, ZeroOdBaseline,
};
use crate::synth::{demo_network, full_scale_network};

#[derive(Debug, Parser)]
#[command(
    name = "odflow",
    version,
    about = "Demand estimation and traffic assignment for a two-level terminal loop road"
)]
pub struct Cli {
    /// TOML settings file; command-line flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic network description as JSON.
    GenNetwork(GenNetworkArgs),
    /// Generate ground-truth hourly demand and the flow observations it
    /// implies.
    GenObs(GenObsArgs),
    /// Recover hourly demand matrices from observed flows.
    GenOd(GenOdArgs),
    /// Assign stored demand matrices to the network, hour by hour.
    RunDta(RunDtaArgs),
    /// Observations → recovered demand → assignment → training dataset.
    BuildDataset(BuildDatasetArgs),
    /// Train the flow→demand model on a dataset.
    Train(TrainArgs),
    /// Held-out demand-space error report for a trained model.
    EvalNn(EvalNnArgs),
    /// Closed-loop evaluation: flows → predicted demand → assignment →
    /// reproduced flows.
    EvalLoop(EvalLoopArgs),
    /// Apply capacity and cost changes; write the transformed network.
    Scenario(ScenarioArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NetworkKind {
    /// Minimal two-level loop: 7 zones, 12 links.
    Demo,
    /// Full two-level terminal loop: 32 zones, 35 sensors.
    Full,
}

#[derive(Debug, Args)]
pub struct GenNetworkArgs {
    #[arg(long, value_enum, default_value_t = NetworkKind::Demo)]
    pub kind: NetworkKind,
    /// Seed for the geometry jitter of the full network.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenObsArgs {
    #[arg(long)]
    pub network: PathBuf,
    /// Where to write the hourly flow observations.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the ground-truth demand matrices here.
    #[arg(long)]
    pub truth_out: Option<PathBuf>,
    #[arg(long)]
    pub days: Option<u32>,
    /// Relative noise amplitude in [0, 1).
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GenOdArgs {
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long)]
    pub obs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunDtaArgs {
    #[arg(long)]
    pub network: PathBuf,
    /// Demand matrices to assign (one per hour).
    #[arg(long)]
    pub od: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BuildDatasetArgs {
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long)]
    pub obs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Where to write the model checkpoint (JSON).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<u32>,
    #[arg(long)]
    pub hidden_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub dropout_rate: Option<f64>,
    #[arg(long)]
    pub l1_lambda: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalNnArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Report file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PredictorKind {
    /// Trained neural model (requires --model).
    Nn,
    /// Always predicts zero demand.
    Zero,
    /// Always predicts the mean training demand.
    Mean,
    /// Returns the training demand whose flows are nearest to the query.
    Nearest,
}

#[derive(Debug, Args)]
pub struct EvalLoopArgs {
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value_t = PredictorKind::Nn)]
    pub predictor: PredictorKind,
    /// Model checkpoint; required for the nn predictor.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Report file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[arg(long)]
    pub network: PathBuf,
    /// Scale a link capacity: LINK=FACTOR with factor in (0, 1].
    /// Repeatable.
    #[arg(long = "capacity", value_name = "LINK=FACTOR", value_parser = parse_link_value)]
    pub capacity: Vec<(u32, f64)>,
    /// Add financial cost to a link: LINK=COST with cost >= 0. Repeatable.
    #[arg(long = "add-cost", value_name = "LINK=COST", value_parser = parse_link_value)]
    pub add_cost: Vec<(u32, f64)>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Status lines go to stdout but must not kill the process when the
/// consumer stops reading (e.g. piping into `head`).
macro_rules! status {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

fn parse_link_value(raw: &str) -> Result<(u32, f64), String> {
    let (link, value) = raw
        .split_once('=')
        .ok_or_else(|| format!("expected LINK=VALUE, got `{raw}`"))?;
    let link: u32 = link
        .trim()
        .parse()
        .map_err(|e| format!("bad link id `{link}`: {e}"))?;
    let value: f64 = value
        .trim()
        .parse()
        .map_err(|e| format!("bad value `{value}`: {e}"))?;
    Ok((link, value))
}

fn read_network(path: &Path) -> Result<RoadNetwork> {
    load_network(path).with_context(|| format!("reading network {}", path.display()))
}

pub fn run(cli: Cli) -> Result<()> {
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::GenNetwork(args) => gen_network(args),
        Command::GenObs(args) => gen_obs(args, &config),
        Command::GenOd(args) => gen_od(args, &config),
        Command::RunDta(args) => run_dta_cmd(args, &config),
        Command::BuildDataset(args) => build_dataset_cmd(args, &config),
        Command::Train(args) => train_cmd(args, &config),
        Command::EvalNn(args) => eval_nn_cmd(args),
        Command::EvalLoop(args) => eval_loop_cmd(args, &config),
        Command::Scenario(args) => scenario_cmd(args),
    }
}

fn gen_network(args: GenNetworkArgs) -> Result<()> {
    let net = match args.kind {
        NetworkKind::Demo => demo_network(),
        NetworkKind::Full => full_scale_network(args.seed),
    };
    save_network(&net, &args.out)
        .with_context(|| format!("writing network {}", args.out.display()))?;
    status!(
        "wrote network: {} nodes, {} links, {} zones, {} sensors -> {}",
        net.nodes().len(),
        net.links().len(),
        net.zones().len(),
        net.sensors().len(),
        args.out.display()
    );
    Ok(())
}

fn gen_obs(args: GenObsArgs, config: &AppConfig) -> Result<()> {
    let net = read_network(&args.network)?;
    let mut profile = SyntheticDemandProfile::default_for(
        &net,
        args.seed.unwrap_or(config.profile.seed),
    );
    profile.days = args.days.unwrap_or(config.profile.days);
    profile.noise_amplitude = args.noise.unwrap_or(config.profile.noise_amplitude);
    let truth = generate_ground_truth(&net, &profile)?;
    let observations = observations_for(&net, &truth)?;
    save_observations(&observations, net.zone_count(), &args.out)
        .with_context(|| format!("writing observations {}", args.out.display()))?;
    if let Some(truth_out) = &args.truth_out {
        save_od_matrices(&truth, truth_out)
            .with_context(|| format!("writing ground truth {}", truth_out.display()))?;
        status!("wrote ground-truth demand for {} hours -> {}", truth.len(), truth_out.display());
    }
    status!(
        "wrote observations for {} hours ({} days) -> {}",
        observations.len(),
        profile.days,
        args.out.display()
    );
    Ok(())
}

fn gen_od(args: GenOdArgs, config: &AppConfig) -> Result<()> {
    let net = read_network(&args.network)?;
    let observations = load_observations(&args.obs, net.zones())
        .with_context(|| format!("reading observations {}", args.obs.display()))?;
    if observations.is_empty() {
        bail!("no observations in {}", args.obs.display());
    }
    let mask = build_zero_mask(net.zones());
    let options = config.solver.to_options();
    let mut matrices = Vec::with_capacity(observations.len());
    let mut worst: f64 = 0.0;
    for obs in &observations {
        let system = assemble_constraints(net.zones(), obs, &mask)?;
        let solved = solve_feasible_od(&system, &mask, obs.hour_index, &options)?;
        worst = worst.max(solved.objective);
        matrices.push(solved.matrix);
    }
    save_od_matrices(&matrices, &args.out)
        .with_context(|| format!("writing demand matrices {}", args.out.display()))?;
    status!(
        "recovered demand for {} hours (worst residual {:.3e}) -> {}",
        matrices.len(),
        worst,
        args.out.display()
    );
    Ok(())
}

fn run_dta_cmd(args: RunDtaArgs, config: &AppConfig) -> Result<()> {
    let net = read_network(&args.network)?;
    let mask = build_zero_mask(net.zones());
    let matrices = load_od_matrices(&args.od, &mask)
        .with_context(|| format!("reading demand matrices {}", args.od.display()))?;
    if matrices.is_empty() {
        bail!("no demand matrices in {}", args.od.display());
    }
    let params = config.assignment.to_params();
    let mut records = Vec::with_capacity(matrices.len());
    let mut unconverged = 0usize;
    for od in &matrices {
        let result = run_dta(&net, od, &params)?;
        if !result.converged {
            unconverged += 1;
        }
        records.push(HourlyFlows {
            hour: od.hour_index,
            flows: result.sensor_flows,
            iterations_run: result.iterations_run,
            converged: result.converged,
        });
    }
    save_sensor_flows(&records, &params, net.sensors().len(), &args.out)
        .with_context(|| format!("writing sensor flows {}", args.out.display()))?;
    status!(
        "assigned {} hours ({} unconverged) -> {}",
        records.len(),
        unconverged,
        args.out.display()
    );
    Ok(())
}

fn build_dataset_cmd(args: BuildDatasetArgs, config: &AppConfig) -> Result<()> {
    let net = read_network(&args.network)?;
    let observations = load_observations(&args.obs, net.zones())
        .with_context(|| format!("reading observations {}", args.obs.display()))?;
    let build = build_dataset(
        &net,
        &observations,
        &config.solver.to_options(),
        &config.assignment.to_params(),
    )?;
    save_dataset(&build.dataset, &args.out)
        .with_context(|| format!("writing dataset {}", args.out.display()))?;
    let unconverged = build.assignments.iter().filter(|a| !a.converged).count();
    status!(
        "dataset: {} samples ({} train, {} test), {} unconverged assignment hours -> {}",
        build.dataset.inputs.len(),
        build.dataset.train_indices.len(),
        build.dataset.test_indices.len(),
        unconverged,
        args.out.display()
    );
    Ok(())
}

fn train_cmd(args: TrainArgs, config: &AppConfig) -> Result<()> {
    let dataset = load_dataset(&args.dataset)
        .with_context(|| format!("reading dataset {}", args.dataset.display()))?;
    let mut train_config = config.training.to_config();
    if let Some(v) = args.epochs {
        train_config.epochs = v;
    }
    if let Some(v) = args.hidden_size {
        train_config.hidden_size = v;
    }
    if let Some(v) = args.learning_rate {
        train_config.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        train_config.batch_size = v;
    }
    if let Some(v) = args.dropout_rate {
        train_config.dropout_rate = v;
    }
    if let Some(v) = args.l1_lambda {
        train_config.l1_lambda = v;
    }
    if let Some(v) = args.seed {
        train_config.seed = v;
    }
    let (model, report) = train(&dataset, &train_config)?;
    model
        .save(&args.out)
        .with_context(|| format!("writing model {}", args.out.display()))?;
    status!(
        "trained {} epochs: loss {:.4} -> {:.4}; model -> {}",
        train_config.epochs,
        report.epoch_losses.first().unwrap(),
        report.epoch_losses.last().unwrap(),
        args.out.display()
    );
    Ok(())
}

fn write_text_report(out: Option<&Path>, body: &[u8]) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, body)
                .with_context(|| format!("writing report {}", path.display()))?;
            status!("report -> {}", path.display());
        }
        None => {
            if let Err(e) = std::io::stdout().write_all(body) {
                if e.kind() != std::io::ErrorKind::BrokenPipe {
                    return Err(e.into());
                }
            }
        }
    }
    Ok(())
}

fn eval_nn_cmd(args: EvalNnArgs) -> Result<()> {
    let model = NNModel::load(&args.model)
        .with_context(|| format!("reading model {}", args.model.display()))?;
    let dataset = load_dataset(&args.dataset)
        .with_context(|| format!("reading dataset {}", args.dataset.display()))?;
    if dataset.test_indices.is_empty() {
        bail!("dataset has no held-out samples to evaluate");
    }
    let hours: Vec<u32> = dataset.test_indices.iter().map(|&i| dataset.hours[i]).collect();
    let predictions: Vec<Vec<f64>> = dataset
        .test_indices
        .iter()
        .map(|&i| model.predict(&dataset.inputs[i]))
        .collect();
    let targets: Vec<Vec<f64>> = dataset
        .test_indices
        .iter()
        .map(|&i| dataset.targets[i].clone())
        .collect();
    let report = build_hourly_report(&hours, &predictions, &targets)?;
    let mut body = Vec::new();
    write_report(&mut body, &report)?;
    write_text_report(args.out.as_deref(), &body)?;
    let summary = evaluate_nn(&model, &dataset, &dataset.test_indices);
    status!(
        "held-out demand error: mse {:.4}, rmse {:.4}, rrmse {}",
        summary.mse,
        summary.rmse,
        summary
            .rrmse_percent
            .map(|v| format!("{v:.2}%"))
            .unwrap_or_else(|| "na".into())
    );
    Ok(())
}

fn eval_loop_cmd(args: EvalLoopArgs, config: &AppConfig) -> Result<()> {
    let net = read_network(&args.network)?;
    let dataset = load_dataset(&args.dataset)
        .with_context(|| format!("reading dataset {}", args.dataset.display()))?;
    if dataset.test_indices.is_empty() {
        bail!("dataset has no held-out samples to evaluate");
    }
    let model;
    let mean;
    let nearest;
    let predictor: &dyn OdPredictor = match args.predictor {
        PredictorKind::Nn => {
            let path = args
                .model
                .as_ref()
                .context("--predictor nn requires --model")?;
            model = NNModel::load(path)
                .with_context(|| format!("reading model {}", path.display()))?;
            &model
        }
        PredictorKind::Zero => &ZeroOdBaseline,
        PredictorKind::Mean => {
            mean = MeanOdBaseline::from_dataset(&dataset, &dataset.train_indices);
            &mean
        }
        PredictorKind::Nearest => {
            nearest = NearestOracle::from_dataset(&dataset, &dataset.train_indices);
            &nearest
        }
    };
    let hours: Vec<u32> = dataset.test_indices.iter().map(|&i| dataset.hours[i]).collect();
    let flows: Vec<Vec<f64>> = dataset
        .test_indices
        .iter()
        .map(|&i| dataset.inputs[i].clone())
        .collect();
    let report = closed_loop_eval(&net, predictor, &hours, &flows, &config.assignment.to_params())?;
    let mut body = Vec::new();
    write_closed_loop_report(&mut body, &report)?;
    write_text_report(args.out.as_deref(), &body)?;
    status!(
        "closed-loop flow error ({}): mse {:.4}, rmse {:.4}, rrmse {}",
        report.predictor,
        report.pooled.mse,
        report.pooled.rmse,
        report
            .pooled
            .rrmse_percent
            .map(|v| format!("{v:.2}%"))
            .unwrap_or_else(|| "na".into())
    );
    Ok(())
}

fn scenario_cmd(args: ScenarioArgs) -> Result<()> {
    let net = read_network(&args.network)?;
    if args.capacity.is_empty() && args.add_cost.is_empty() {
        bail!("nothing to do: pass --capacity and/or --add-cost");
    }
    let scenario = ScenarioTransform {
        capacity_factors: args
            .capacity
            .iter()
            .map(|&(l, f)| (LinkId(l), f))
            .collect(),
        extra_link_costs: args
            .add_cost
            .iter()
            .map(|&(l, c)| (LinkId(l), c))
            .collect(),
    };
    let transformed = apply_scenario(&net, &scenario)?;
    save_network(&transformed, &args.out)
        .with_context(|| format!("writing network {}", args.out.display()))?;
    status!(
        "applied {} capacity changes and {} cost changes -> {}",
        scenario.capacity_factors.len(),
        scenario.extra_link_costs.len(),
        args.out.display()
    );
    Ok(())
}
