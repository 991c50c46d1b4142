//! Acceptance suite: one check per shipped guarantee, each printing a
//! pass/fail line. Run with `cargo test --test acceptance -- --nocapture`
//! to see the lines; any failure fails the test.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use odflow::dta::{
    logit_split, run_dta, run_dta_with_initial_routes, DtaParams,
};
use odflow::linalg::Mat;
use odflow::metrics::flow_errors;
use odflow::network::{
    CostWeights, Link, LinkId, Node, NodeId, NodeKind, RoadNetwork, Sensor, SensorId, VdfParams,
    Zone, ZoneClass, ZoneId,
};
use odflow::neural::{
    eval_predictions, evaluate_nn, train, ForwardCache, NNModel, TrainConfig,
};
use odflow::odgen::{
    assemble_constraints, build_zero_mask, observation_from_matrix, solve_feasible_od, ODMatrix,
    SolveOptions, FEASIBILITY_TOL,
};
use odflow::pipeline::{
    apply_scenario, build_dataset, closed_loop_eval, generate_ground_truth, observations_for,
    MeanOdBaseline, NearestOracle, OdPredictor, ScenarioTransform, SyntheticDemandProfile,
    ZeroOdBaseline,
};
use odflow::synth::{demo_network, full_scale_network};

type CriterionResult = Result<String, String>;

fn check(ok: bool, detail: String) -> CriterionResult {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within_budget(start: Instant, budget: Duration, detail: String) -> CriterionResult {
    let elapsed = start.elapsed();
    check(
        elapsed <= budget,
        format!("{detail}; took {:.2?} (budget {:.0?})", elapsed, budget),
    )
}

/// 1 — demand recovery: 100 randomized observation sets on the 7-zone
/// network solve to a non-negative, structurally zero-respecting demand
/// whose residual is at most 1e-6 of the observation energy, in under 10 s.
fn criterion_solver_feasibility() -> CriterionResult {
    let start = Instant::now();
    let net = demo_network();
    let mask = build_zero_mask(net.zones());
    let options = SolveOptions::default();
    let mut worst_rel = 0.0f64;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut truth = ODMatrix::zeros(&mask, 0);
        for &(i, j) in mask.free_entries() {
            truth.set_demand(i, j, rng.random_range(0.0..300.0)).unwrap();
        }
        let obs = observation_from_matrix(net.zones(), &truth).map_err(|e| e.to_string())?;
        let system = assemble_constraints(net.zones(), &obs, &mask).map_err(|e| e.to_string())?;
        let b_energy = system.objective(&vec![0.0; mask.free_count()]);
        let solved =
            solve_feasible_od(&system, &mask, 0, &options).map_err(|e| e.to_string())?;
        for zi in net.zones() {
            for zj in net.zones() {
                let d = solved.matrix.demand(zi.id, zj.id);
                if !(d >= 0.0) {
                    return Err(format!("seed {seed}: negative demand {d}"));
                }
                if mask.is_masked(zi.id, zj.id) && d != 0.0 {
                    return Err(format!(
                        "seed {seed}: structural zero {} -> {} holds {d}",
                        zi.id, zj.id
                    ));
                }
            }
        }
        if b_energy > 0.0 {
            let rel = solved.objective / b_energy;
            worst_rel = worst_rel.max(rel);
            if rel > 1e-6 {
                return Err(format!(
                    "seed {seed}: residual {rel:.3e} of observation energy exceeds 1e-6"
                ));
            }
        }
    }
    within_budget(
        start,
        Duration::from_secs(10),
        format!("100 observation sets solved; worst relative residual {worst_rel:.3e}"),
    )
}

/// 2 — structural zeros: the full-scale zone fixture admits exactly 161
/// free demand entries out of 32 × 32.
fn criterion_free_entry_count() -> CriterionResult {
    let net = full_scale_network(0);
    let mask = build_zero_mask(net.zones());
    let total = net.zone_count() * net.zone_count();
    check(
        mask.free_count() == 161 && total == 1024,
        format!("{} free entries out of {total}", mask.free_count()),
    )
}

/// 3 — route-choice properties over 1,000 random draws: probabilities sum
/// to one (±1e-9), permuting costs permutes probabilities, zero
/// sensitivity is uniform, and positive cost scaling changes nothing.
fn criterion_logit_properties() -> CriterionResult {
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=6);
        let costs: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..400.0)).collect();
        let eta = rng.random_range(0.0..8.0);
        let p = logit_split(&costs, eta).map_err(|e| e.to_string())?;
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(format!("seed {seed}: probabilities sum to {total}"));
        }

        // Symmetry: reversing the cost list must reverse the split.
        let reversed: Vec<f64> = costs.iter().rev().cloned().collect();
        let q = logit_split(&reversed, eta).map_err(|e| e.to_string())?;
        for (a, b) in p.iter().zip(q.iter().rev()) {
            if (a - b).abs() > 1e-12 {
                return Err(format!("seed {seed}: permutation symmetry broken: {a} vs {b}"));
            }
        }

        let uniform = logit_split(&costs, 0.0).map_err(|e| e.to_string())?;
        for &u in &uniform {
            if (u - 1.0 / n as f64).abs() > 1e-12 {
                return Err(format!("seed {seed}: zero sensitivity gave {u}"));
            }
        }

        let scale = rng.random_range(1e-3..1e3);
        let scaled: Vec<f64> = costs.iter().map(|c| c * scale).collect();
        let r = logit_split(&scaled, eta).map_err(|e| e.to_string())?;
        for (a, b) in p.iter().zip(&r) {
            if (a - b).abs() > 1e-9 {
                return Err(format!("seed {seed}: scale invariance broken: {a} vs {b}"));
            }
        }
    }
    Ok("1000 draws: sum, symmetry, uniformity, scale invariance".into())
}

fn parallel_net(t0_a: f64, t0_b: f64, capacity: f64) -> RoadNetwork {
    let nodes = vec![
        Node {
            id: NodeId(0),
            kind: NodeKind::Junction,
        },
        Node {
            id: NodeId(1),
            kind: NodeKind::Junction,
        },
    ];
    let link = |id: u32, t0: f64| Link {
        id: LinkId(id),
        from: NodeId(0),
        to: NodeId(1),
        length: 1000.0,
        capacity,
        free_flow_time: t0,
        financial_cost: 0.0,
        travel_time: t0,
        flow: 0.0,
    };
    let links = vec![link(0, t0_a), link(1, t0_b)];
    let zones = vec![
        Zone {
            id: ZoneId(0),
            class: ZoneClass::UpperEntrance,
            attach_links: vec![LinkId(0), LinkId(1)],
        },
        Zone {
            id: ZoneId(1),
            class: ZoneClass::UpperCurbside,
            attach_links: vec![LinkId(0), LinkId(1)],
        },
    ];
    let sensors = vec![
        Sensor {
            id: SensorId(0),
            link: LinkId(0),
        },
        Sensor {
            id: SensorId(1),
            link: LinkId(1),
        },
    ];
    RoadNetwork::new(
        nodes,
        links,
        zones,
        sensors,
        CostWeights::default(),
        VdfParams::default(),
    )
    .unwrap()
}

/// Standalone fixed-point iteration for the two-parallel-link system,
/// deliberately sharing no code with the assignment loop.
fn two_link_oracle(t0: (f64, f64), capacity: f64, demand: f64, eta: f64, tol: f64) -> f64 {
    let vdf = VdfParams::default();
    let bpr = |t0: f64, v: f64| t0 * (1.0 + vdf.coefficient * (v / capacity).powf(vdf.exponent));
    let split = |c1: f64, c2: f64| {
        let w1 = c1.powf(-eta);
        let w2 = c2.powf(-eta);
        w1 / (w1 + w2)
    };
    let mut p = split(t0.0, t0.1);
    for _ in 0..1_000_000 {
        let next = split(bpr(t0.0, p * demand), bpr(t0.1, (1.0 - p) * demand));
        let delta = (next - p).abs();
        p = next;
        if delta < tol {
            break;
        }
    }
    p
}

/// 4 — assignment equilibrium: the two-parallel-link split matches the
/// scalar fixed-point oracle within 1e-6 absolute, and every fixture
/// conserves demand (assigned route flows re-add to the demand at 1e-9
/// relative, the float-summation reading of "exact").
fn criterion_assignment_oracle() -> CriterionResult {
    let fixtures = [
        // (free-flow times, demand, iteration budget): uncongested and
        // congested regimes. The averaging step converges like 1/k, so the
        // congested case needs a larger budget to reach 1e-6.
        ((100.0, 120.0), 180.0, 50u32),
        ((100.0, 120.0), 2400.0, 5_000),
    ];
    let mut details = Vec::new();
    for ((t0a, t0b), demand_total, budget) in fixtures {
        let net = parallel_net(t0a, t0b, 1800.0);
        let mask = build_zero_mask(net.zones());
        let mut od = ODMatrix::zeros(&mask, 0);
        od.set_demand(ZoneId(0), ZoneId(1), demand_total).unwrap();
        let params = DtaParams {
            sensitivity: 1.0,
            max_iterations: budget,
            convergence_epsilon: 1e-15,
        };
        let seeds = vec![(ZoneId(0), ZoneId(1), vec![vec![LinkId(0)], vec![LinkId(1)]])];
        let result =
            run_dta_with_initial_routes(&net, &od, &params, &seeds).map_err(|e| e.to_string())?;
        let got = result.route_sets[0].probabilities[0];
        let want = two_link_oracle((t0a, t0b), 1800.0, demand_total, 1.0, 1e-12);
        let gap = (got - want).abs();
        if gap > 1e-6 {
            return Err(format!(
                "demand {demand_total}: split {got} vs oracle {want} (gap {gap:.3e})"
            ));
        }
        let assigned: f64 = result.link_flows.iter().sum();
        if (assigned - demand_total).abs() > 1e-9 * demand_total {
            return Err(format!(
                "demand {demand_total}: assigned {assigned} (conservation broken)"
            ));
        }
        for rs in &result.route_sets {
            let total: f64 = rs.probabilities.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(format!("route probabilities sum to {total}"));
            }
        }
        details.push(format!("D={demand_total}: |split-oracle|={gap:.2e}"));
    }
    Ok(details.join("; "))
}

fn he_like(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    let bound = (6.0 / cols as f64).sqrt();
    let mut m = Mat::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            m.set(r, c, rng.random_range(-bound..bound));
        }
    }
    m
}

/// 5 — gradients: on 20 random small models (half with the L1 penalty on),
/// analytic gradients match central finite differences (step 1e-5) within
/// 1e-4 relative, in under 30 s.
fn criterion_gradient_check() -> CriterionResult {
    let start = Instant::now();
    let h = 1e-5;
    let mut accepted = 0usize;
    let mut seed = 0u64;
    let mut worst_rel = 0.0f64;
    while accepted < 20 {
        if seed >= 400 {
            return Err(format!("only {accepted} usable fixtures in 400 seeds"));
        }
        let l1 = if accepted % 2 == 0 { 0.0 } else { 0.02 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        seed += 1;
        let (n_in, n_hidden, n_out) = (4, 6, 3);
        let model = NNModel {
            w1: he_like(n_hidden, n_in, &mut rng),
            b1: (0..n_hidden).map(|_| rng.random_range(-0.3..0.3)).collect(),
            w2: he_like(n_out, n_hidden, &mut rng),
            b2: (0..n_out).map(|_| rng.random_range(-0.3..0.3)).collect(),
            dropout_rate: 0.0,
            l1_lambda: l1,
        };
        let xs: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..n_in).map(|_| rng.random_range(0.5..2.0)).collect())
            .collect();
        let ts: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..n_out).map(|_| rng.random_range(0.0..2.0)).collect())
            .collect();

        // Central differences are only trustworthy away from the ReLU
        // kinks (and, with L1, away from zero weights); skip fixtures that
        // straddle one. The gradient itself is still verified on 20 full
        // models.
        let margin = 50.0 * h;
        let clean = xs.iter().all(|x| {
            let cache = model.forward(x, None);
            cache
                .z1
                .iter()
                .chain(&cache.z2)
                .all(|z| z.abs() > margin)
        }) && (l1 == 0.0
            || model
                .w1
                .data()
                .iter()
                .chain(model.w2.data())
                .all(|w| w.abs() > margin));
        if !clean {
            continue;
        }
        accepted += 1;

        let caches: Vec<ForwardCache> = xs.iter().map(|x| model.forward(x, None)).collect();
        let analytic = model.backward(&caches, &ts);
        let batch_loss = |m: &NNModel| {
            let preds: Vec<Vec<f64>> = xs.iter().map(|x| m.predict(x)).collect();
            m.loss(&preds, &ts)
        };
        let mut compare = |got: f64, tweak: &dyn Fn(&mut NNModel) -> &mut f64| -> Result<(), String> {
            let mut plus = model.clone();
            *tweak(&mut plus) += h;
            let mut minus = model.clone();
            *tweak(&mut minus) -= h;
            let fd = (batch_loss(&plus) - batch_loss(&minus)) / (2.0 * h);
            let scale = got.abs().max(fd.abs());
            let err = (got - fd).abs();
            if err > 1e-7 + 1e-4 * scale {
                return Err(format!(
                    "λ={l1}: analytic {got} vs finite difference {fd}"
                ));
            }
            if scale > 0.0 {
                worst_rel = worst_rel.max(err / scale.max(1e-3));
            }
            Ok(())
        };
        for r in 0..n_hidden {
            for c in 0..n_in {
                compare(analytic.w1.get(r, c), &move |m: &mut NNModel| m.w1.get_mut(r, c))?;
            }
        }
        for j in 0..n_hidden {
            compare(analytic.b1[j], &move |m: &mut NNModel| &mut m.b1[j])?;
        }
        for r in 0..n_out {
            for c in 0..n_hidden {
                compare(analytic.w2.get(r, c), &move |m: &mut NNModel| m.w2.get_mut(r, c))?;
            }
        }
        for k in 0..n_out {
            compare(analytic.b2[k], &move |m: &mut NNModel| &mut m.b2[k])?;
        }
    }
    within_budget(
        start,
        Duration::from_secs(30),
        format!("20 models checked; worst relative gap {worst_rel:.2e}"),
    )
}

/// 6 — metric identities: rmse² = mse at 1e-9 relative over random
/// comparisons, and the error summary reproduces the reference
/// (mse → rmse) pairs (7661.56, 87.53) and (7888.82, 88.82) to two
/// decimals.
fn criterion_metric_identities() -> CriterionResult {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let n = rng.random_range(1..30);
        let actual: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..900.0)).collect();
        let predicted: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..900.0)).collect();
        let e = flow_errors(&predicted, &actual).map_err(|e| e.to_string())?;
        if (e.rmse * e.rmse - e.mse).abs() > 1e-9 * e.mse.max(1e-12) {
            return Err(format!("rmse²={} vs mse={}", e.rmse * e.rmse, e.mse));
        }
    }
    for (mse, rmse_2dp) in [(7661.56f64, 87.53f64), (7888.82, 88.82)] {
        // Build a comparison whose squared error is exactly `mse`.
        let e = flow_errors(&[mse.sqrt()], &[0.0]).map_err(|e| e.to_string())?;
        if (e.rmse - rmse_2dp).abs() >= 0.005 {
            return Err(format!("mse {mse}: rmse {} rounds away from {rmse_2dp}", e.rmse));
        }
    }
    Ok("rmse² = mse on 100 draws; reference pairs reproduced to 2 decimals".into())
}

/// 7 — closed-loop self-consistency: on the 7-zone network with
/// pipeline-generated data and an exact-lookup demand model, every hour's
/// round-trip flow error stays under 1% relative, in under 2 min.
fn criterion_closed_loop_consistency() -> CriterionResult {
    let start = Instant::now();
    let net = demo_network();
    let profile = SyntheticDemandProfile {
        days: 1,
        ..SyntheticDemandProfile::default_for(&net, 11)
    };
    let truth = generate_ground_truth(&net, &profile).map_err(|e| e.to_string())?;
    let observations = observations_for(&net, &truth).map_err(|e| e.to_string())?;
    let dta = DtaParams::default();
    let build = build_dataset(&net, &observations, &SolveOptions::default(), &dta)
        .map_err(|e| e.to_string())?;
    let all: Vec<usize> = (0..build.dataset.inputs.len()).collect();
    let oracle = NearestOracle::from_dataset(&build.dataset, &all);
    let report = closed_loop_eval(
        &net,
        &oracle,
        &build.dataset.hours,
        &build.dataset.inputs,
        &dta,
    )
    .map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (hour, e) in report.hours.iter().zip(&report.per_hour) {
        match e.rrmse_percent {
            Some(r) => {
                worst = worst.max(r);
                if r >= 1.0 {
                    return Err(format!("hour {hour}: round-trip error {r:.4}%"));
                }
            }
            None => return Err(format!("hour {hour}: relative error undefined")),
        }
    }
    within_budget(
        start,
        Duration::from_secs(120),
        format!("24 hours, worst per-hour round-trip error {worst:.2e}%"),
    )
}

/// 8 — learning signal: trained on the 720-hour full-scale dataset with
/// the stock hyperparameters, the model beats the constant-mean predictor
/// on held-out demand error and the zero-demand baseline on closed-loop
/// flow error, in under 30 min.
fn criterion_learning_signal() -> CriterionResult {
    let start = Instant::now();
    let net = full_scale_network(0);
    let profile = SyntheticDemandProfile::default_for(&net, 7);
    let truth = generate_ground_truth(&net, &profile).map_err(|e| e.to_string())?;
    let observations = observations_for(&net, &truth).map_err(|e| e.to_string())?;
    let solve = SolveOptions {
        feasibility_tol: Some(FEASIBILITY_TOL),
        ..SolveOptions::default()
    };
    let dta = DtaParams::default();
    let build = build_dataset(&net, &observations, &solve, &dta).map_err(|e| e.to_string())?;
    let dataset = &build.dataset;
    if dataset.train_indices.len() != 600 || dataset.test_indices.len() != 120 {
        return Err(format!(
            "split is {}/{} rather than 600/120",
            dataset.train_indices.len(),
            dataset.test_indices.len()
        ));
    }

    let config = TrainConfig::default();
    let (model, _) = train(dataset, &config).map_err(|e| e.to_string())?;

    // Held-out demand error against the constant-mean predictor.
    let nn_eval = evaluate_nn(&model, dataset, &dataset.test_indices);
    let mean_baseline = MeanOdBaseline::from_dataset(dataset, &dataset.train_indices);
    let mask = build_zero_mask(net.zones());
    let mean_preds: Vec<Vec<f64>> = dataset
        .test_indices
        .iter()
        .map(|&i| {
            mean_baseline
                .predict_od(&dataset.inputs[i], &mask, dataset.hours[i])
                .map(|od| od.vectorize())
        })
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let test_targets: Vec<Vec<f64>> = dataset
        .test_indices
        .iter()
        .map(|&i| dataset.targets[i].clone())
        .collect();
    let mean_eval = eval_predictions(&mean_preds, &test_targets);
    let (nn_rrmse, mean_rrmse) = match (nn_eval.rrmse_percent, mean_eval.rrmse_percent) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err("relative demand error undefined".into()),
    };
    if !(nn_rrmse < mean_rrmse) {
        return Err(format!(
            "held-out demand error: model {nn_rrmse:.2}% vs mean baseline {mean_rrmse:.2}%"
        ));
    }

    // Closed-loop flow error against the zero-demand baseline.
    let hours: Vec<u32> = dataset.test_indices.iter().map(|&i| dataset.hours[i]).collect();
    let flows: Vec<Vec<f64>> = dataset
        .test_indices
        .iter()
        .map(|&i| dataset.inputs[i].clone())
        .collect();
    let nn_loop = closed_loop_eval(&net, &model, &hours, &flows, &dta).map_err(|e| e.to_string())?;
    let zero_loop =
        closed_loop_eval(&net, &ZeroOdBaseline, &hours, &flows, &dta).map_err(|e| e.to_string())?;
    let (nn_t, zero_t) = match (nn_loop.pooled.rrmse_percent, zero_loop.pooled.rrmse_percent) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err("relative flow error undefined".into()),
    };
    if !(nn_t < zero_t) {
        return Err(format!(
            "closed-loop flow error: model {nn_t:.2}% vs zero baseline {zero_t:.2}%"
        ));
    }
    within_budget(
        start,
        Duration::from_secs(30 * 60),
        format!(
            "demand error {nn_rrmse:.2}% < mean {mean_rrmse:.2}%; loop error {nn_t:.2}% < zero {zero_t:.2}%"
        ),
    )
}

/// 9 — scenario directionality: halving a loaded entrance link's capacity
/// strictly raises that link's equilibrium travel time and does not lower
/// the demand-weighted mean route cost.
fn criterion_scenario_effect() -> CriterionResult {
    let net = demo_network();
    let profile = SyntheticDemandProfile {
        days: 1,
        ..SyntheticDemandProfile::default_for(&net, 5)
    };
    let truth = generate_ground_truth(&net, &profile).map_err(|e| e.to_string())?;
    let od = &truth[10]; // mid-morning, well inside the diurnal peak
    let dta = DtaParams::default();
    let target = LinkId(0); // upper entrance gateway, loaded by construction

    let base = run_dta(&net, od, &dta).map_err(|e| e.to_string())?;
    let squeezed = apply_scenario(
        &net,
        &ScenarioTransform {
            capacity_factors: vec![(target, 0.5)],
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let after = run_dta(&squeezed, od, &dta).map_err(|e| e.to_string())?;

    let pos = net.link_pos(target).unwrap();
    if base.link_flows[pos] <= 0.0 {
        return Err("fixture error: target link carries no flow".into());
    }
    let (t_before, t_after) = (base.link_travel_times[pos], after.link_travel_times[pos]);
    if !(t_after > t_before) {
        return Err(format!(
            "travel time did not rise: {t_before:.6} -> {t_after:.6}"
        ));
    }

    let mean_route_cost = |result: &odflow::dta::AssignmentResult| {
        let mut weighted = 0.0;
        let mut total = 0.0;
        for rs in &result.route_sets {
            let demand = od.demand(rs.origin, rs.dest);
            for (c, p) in rs.costs.iter().zip(&rs.probabilities) {
                weighted += demand * p * c;
            }
            total += demand;
        }
        weighted / total
    };
    let (c_before, c_after) = (mean_route_cost(&base), mean_route_cost(&after));
    check(
        c_after >= c_before,
        format!(
            "travel time {t_before:.4} -> {t_after:.4}; mean route cost {c_before:.4} -> {c_after:.4}"
        ),
    )
}

#[test]
fn acceptance_criteria() {
    let criteria: Vec<(&str, fn() -> CriterionResult)> = vec![
        ("1 demand recovery feasibility", criterion_solver_feasibility),
        ("2 structural zero count", criterion_free_entry_count),
        ("3 route choice properties", criterion_logit_properties),
        ("4 assignment equilibrium oracle", criterion_assignment_oracle),
        ("5 gradient finite differences", criterion_gradient_check),
        ("6 metric identities", criterion_metric_identities),
        ("7 closed-loop self-consistency", criterion_closed_loop_consistency),
        ("8 learning signal", criterion_learning_signal),
        ("9 scenario directionality", criterion_scenario_effect),
    ];
    let mut failures = Vec::new();
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("criterion {name}: PASS — {detail}"),
            Err(detail) => {
                println!("criterion {name}: FAIL — {detail}");
                failures.push(name);
            }
        }
    }
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}
