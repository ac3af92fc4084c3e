//! Acceptance suite. Each test prints one PASS line and enforces the
//! bound, equivalence, or exactness claim it names, with tolerances and
//! runtime ceilings pinned inline.

use std::time::{Duration, Instant};

use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gfl_core::constructions::{
    efficient_config, electric_gd_weights, heat_series_weights, sqrt_series_weights,
    subspace_weights, SubspaceMode, TaskKind, TaskSpec,
};
use gfl_core::graph::{generate_csl, generate_fc, identity_demands, sample_demands, Graph};
use gfl_core::linalg::{max_abs, max_abs_diff, qr_ortho, spectral_norm, subspace_iteration_ref, sym_eig};
use gfl_core::targets::{heat_kernel_from, pinv_psd_from, sqrt_pinv_from};
use gfl_core::transformer::{
    efficient_forward, expand_efficient, forward, forward_eig, EfficientLayerWeights,
    LayerWeights, TransformerState,
};
use gfl_core::verify::{loss_eig, run_task, subspace_oracle, Engine, ErrorReport};
use gfl_core::Mat;

const ENSEMBLE_SEED: u64 = 0;

fn base_spec(kind: TaskKind, layers: usize, k: usize) -> TaskSpec {
    TaskSpec {
        kind,
        layers,
        k,
        delta: None,
        temp: None,
        mu: None,
        lambda_max_hint: None,
    }
}

/// 25 fully connected and 25 circular skip-link graphs, 10 vertices each.
fn ensemble_fifty() -> Vec<Graph> {
    let mut graphs = Vec::with_capacity(50);
    for t in 0..25 {
        graphs.push(generate_fc(10, ENSEMBLE_SEED + t).unwrap());
    }
    for t in 0..25 {
        graphs.push(generate_csl(10, 2, ENSEMBLE_SEED + t).unwrap());
    }
    graphs
}

fn first_violation(report: &ErrorReport) -> String {
    report
        .layers
        .iter()
        .find(|r| r.satisfied == Some(false))
        .map(|r| {
            format!(
                "layer {} error {} exceeds bound {}",
                r.layer,
                r.error,
                r.bound.unwrap()
            )
        })
        .unwrap_or_else(|| "none".into())
}

#[test]
fn descent_flow_bounds_hold_across_graph_ensemble() {
    let t0 = Instant::now();
    for (i, g) in ensemble_fifty().iter().enumerate() {
        let spec = base_spec(TaskKind::ElectricGd, 30, g.n);
        let report = run_task(g, &spec, &identity_demands(g.n), Engine::Full).unwrap();
        assert!(
            report.all_applicable_satisfied(),
            "graph {i}: {}",
            first_violation(&report)
        );
    }
    let elapsed = t0.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    println!("PASS: descent flow bounds, 50 graphs x 30 layers ({elapsed:?})");
}

#[test]
fn inverse_sqrt_series_bounds_hold_across_graph_ensemble() {
    let t0 = Instant::now();
    for (i, g) in ensemble_fifty().iter().enumerate() {
        let spec = base_spec(TaskKind::SqrtSeries, 40, g.n);
        let report = run_task(g, &spec, &identity_demands(g.n), Engine::Full).unwrap();
        // layer 0 carries no claim; every later layer must satisfy
        assert!(report.layers[0].bound.is_none());
        assert!(
            report.layers[1..].iter().all(|r| r.satisfied == Some(true)),
            "graph {i}: {}",
            first_violation(&report)
        );
    }
    let elapsed = t0.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    println!("PASS: inverse sqrt series bounds, 50 graphs x 40 layers ({elapsed:?})");
}

#[test]
fn heat_series_bounds_hold_across_graph_ensemble() {
    let t0 = Instant::now();
    for (i, g) in ensemble_fifty().iter().enumerate() {
        let lam_max = *sym_eig(g.laplacian().as_mat())
            .unwrap()
            .eigenvalues
            .last()
            .unwrap();
        let s = 0.5;
        let layers = 16usize.max((8.0 * s * lam_max).ceil() as usize + 8);
        let mut spec = base_spec(TaskKind::HeatSeries, layers, g.n);
        spec.temp = Some(s);
        let report = run_task(g, &spec, &identity_demands(g.n), Engine::Full).unwrap();
        let last = report.layers.last().unwrap();
        assert_eq!(last.satisfied, Some(true), "graph {i}: {}", first_violation(&report));
        assert!(
            report.all_applicable_satisfied(),
            "graph {i}: {}",
            first_violation(&report)
        );
    }
    let elapsed = t0.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    println!("PASS: heat series bounds, 50 graphs at depth >= 8*s*lambda_max ({elapsed:?})");
}

#[test]
fn squared_propagator_error_decays_double_exponentially() {
    let t0 = Instant::now();
    for (i, g) in ensemble_fifty().iter().enumerate() {
        let demands = identity_demands(g.n);
        let mut finals = Vec::new();
        let mut lambda_min = 0.0;
        for layers in 1..=5 {
            let spec = base_spec(TaskKind::ElectricFast, layers, 1);
            let report = run_task(g, &spec, &demands, Engine::Full).unwrap();
            assert!(
                report.all_applicable_satisfied(),
                "graph {i} depth {layers}: {}",
                first_violation(&report)
            );
            finals.push(report.layers.last().unwrap().error);
            lambda_min = report.lambda_min;
        }
        // doubling the depth squares the spectrum-normalized error
        let q2 = lambda_min * finals[1];
        let q4 = lambda_min * finals[3];
        if finals[1] < 1.0 && finals[3] > 1e-14 {
            assert!(
                q4.ln() < 2.0 * q2.ln(),
                "graph {i}: ln q4 = {} vs 2 ln q2 = {}",
                q4.ln(),
                2.0 * q2.ln()
            );
        }
    }
    let elapsed = t0.elapsed();
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    println!("PASS: squared propagator bound and super-geometric decay, 50 graphs ({elapsed:?})");
}

#[test]
fn cubed_propagator_meets_final_layer_bound() {
    let t0 = Instant::now();
    let s = 0.5;
    let mut checked = 0usize;
    let mut skipped = 0usize;
    for (i, g) in ensemble_fifty().iter().enumerate() {
        let lam_max = *sym_eig(g.laplacian().as_mat())
            .unwrap()
            .eigenvalues
            .last()
            .unwrap();
        for layers in 1..=4 {
            let mut spec = base_spec(TaskKind::HeatFast, layers, 1);
            spec.temp = Some(s);
            if s * lam_max > 3f64.powi(layers as i32) {
                // construction precondition fails; the run must refuse
                assert!(run_task(g, &spec, &identity_demands(g.n), Engine::Full).is_err());
                skipped += 1;
                continue;
            }
            let report = run_task(g, &spec, &identity_demands(g.n), Engine::Full).unwrap();
            let last = report.layers.last().unwrap();
            assert_eq!(
                last.satisfied,
                Some(true),
                "graph {i} depth {layers}: {}",
                first_violation(&report)
            );
            checked += 1;
        }
    }
    assert!(checked >= 100, "only {checked} depth combinations admissible");
    let elapsed = t0.elapsed();
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    println!(
        "PASS: cubed propagator final-layer bound, {checked} runs ({skipped} below the depth precondition) ({elapsed:?})"
    );
}

/// Worst consecutive eigenvalue ratio governing per-column convergence of
/// the top-k iteration.
fn top_gap_ratio(evals: &[f64], k: usize) -> f64 {
    let n = evals.len();
    let mut r: f64 = 0.0;
    for j in 1..=k {
        r = r.max(evals[n - j - 1] / evals[n - j]);
    }
    r
}

fn random_orthonormal(n: usize, k: usize, seed: u64) -> Mat {
    qr_ortho(&sample_demands(n, k, false, seed).unwrap().psi).unwrap()
}

#[test]
fn subspace_units_match_reference_iteration_and_converge() {
    let t0 = Instant::now();
    // skip-link graphs carry spread top spectra; the fully connected family
    // clusters its top eigenvalues and fails the gap gate for k > 1
    let graphs: Vec<Graph> = (0..20).map(|t| generate_csl(10, 2, ENSEMBLE_SEED + t).unwrap()).collect();

    // one unit against the reference block iteration, projector level
    for (i, g) in graphs.iter().enumerate() {
        for k in [1usize, 3, 5] {
            let phi0 = random_orthonormal(g.n, k, 300 + i as u64);
            let weights = subspace_weights(g.d(), k, k + 1, SubspaceMode::Top).unwrap();
            let z0 = TransformerState::eig(&g.incidence(), &phi0).unwrap();
            let states = forward_eig(&z0, &weights).unwrap();
            let phi = states.last().unwrap().solution();
            let reference = subspace_iteration_ref(g.laplacian().as_mat(), &phi0, 1).unwrap();
            let diff = phi.dot(&phi.t()) - reference.dot(&reference.t());
            let gap = spectral_norm(&diff).unwrap();
            assert!(gap <= 1e-8, "graph {i} k {k}: projector gap {gap}");
        }
    }

    // enough units to push per-column loss under 1e-4 wherever the gap
    // gate (<= 0.9 on every governing ratio) admits the graph
    let mut converged = [0usize; 3];
    for (i, g) in graphs.iter().enumerate() {
        let dec = sym_eig(g.laplacian().as_mat()).unwrap();
        for (ki, k) in [1usize, 3, 5].into_iter().enumerate() {
            let r = top_gap_ratio(&dec.eigenvalues, k);
            if r > 0.9 {
                continue;
            }
            let units = 10usize.max(((1e-8f64).ln() / (2.0 * r.ln())).ceil() as usize);
            let weights = subspace_weights(g.d(), k, units * (k + 1), SubspaceMode::Top).unwrap();
            let phi0 = random_orthonormal(g.n, k, 500 + i as u64);
            let z0 = TransformerState::eig(&g.incidence(), &phi0).unwrap();
            let states = forward_eig(&z0, &weights).unwrap();
            let phi = states.last().unwrap().solution();
            let oracle = subspace_oracle(&dec, k, TaskKind::SubspaceTopK).unwrap();
            let losses = loss_eig(&phi, &oracle).unwrap();
            let worst = losses.iter().cloned().fold(0.0f64, f64::max);
            assert!(worst <= 1e-4, "graph {i} k {k}: worst column loss {worst}");
            converged[ki] += 1;
        }
    }
    assert!(
        converged.iter().all(|&c| c >= 3),
        "gap gate admitted too few graphs: {converged:?}"
    );

    // bottom mode pulls out the constant null direction
    for (i, g) in graphs.iter().enumerate() {
        let dec = sym_eig(g.laplacian().as_mat()).unwrap();
        let lam2 = dec.eigenvalues[1];
        let lam_max = *dec.eigenvalues.last().unwrap();
        let r = 1.0 - lam2 / lam_max;
        let units = 5000usize.min(10usize.max(((1e-13f64).ln() / (2.0 * r.ln())).ceil() as usize));
        let spec = base_spec(TaskKind::SubspaceBottomK, 2 * units, 1);
        let demands = sample_demands(g.n, 1, false, 700 + i as u64).unwrap();
        let report = run_task(g, &spec, &demands, Engine::Full).unwrap();
        let loss = report.layers.last().unwrap().error;
        assert!(loss <= 1e-8, "graph {i}: null-direction loss {loss}");
        // the oracle's null column is the constant vector
        let kernel = dec.eigenvectors.column(0);
        let c = 1.0 / (g.n as f64).sqrt();
        assert!(kernel.iter().all(|v| (v.abs() - c).abs() <= 1e-10));
    }

    let elapsed = t0.elapsed();
    println!(
        "PASS: subspace units match reference iteration; top-k converged on {converged:?} gap-gated graphs; bottom mode recovers the constant vector ({elapsed:?})"
    );
}

fn constrained_cases(lam_max: f64, d: usize, k: usize) -> Vec<(TaskSpec, Vec<LayerWeights>)> {
    let mut out = Vec::new();
    let mut spec = base_spec(TaskKind::ElectricGd, 8, k);
    spec.delta = Some(0.8 / lam_max);
    out.push((spec.clone(), electric_gd_weights(d, k, 0.8 / lam_max, 8).unwrap()));
    let mut spec = base_spec(TaskKind::SqrtSeries, 8, k);
    spec.lambda_max_hint = Some(lam_max);
    out.push((spec.clone(), sqrt_series_weights(d, k, lam_max, 8).unwrap()));
    let mut spec = base_spec(TaskKind::HeatSeries, 8, k);
    spec.temp = Some(0.1);
    out.push((spec.clone(), heat_series_weights(d, k, 0.1, 8).unwrap()));
    out
}

#[test]
fn constrained_engine_reproduces_full_trajectories() {
    let t0 = Instant::now();
    let mut graphs = Vec::new();
    for t in 0..10 {
        graphs.push(generate_fc(6, ENSEMBLE_SEED + t).unwrap());
        graphs.push(generate_csl(6, 2, ENSEMBLE_SEED + t).unwrap());
    }
    let k = 2;
    for (i, g) in graphs.iter().enumerate() {
        let (n, d) = (g.n, g.d());
        let lam_max = *sym_eig(g.laplacian().as_mat())
            .unwrap()
            .eigenvalues
            .last()
            .unwrap();
        let psi = sample_demands(n, k, true, 900 + i as u64).unwrap().psi;
        let b0 = g.incidence().as_mat().t().to_owned();

        for (spec, full_weights) in constrained_cases(lam_max, d, k) {
            let eff = efficient_config(&spec).unwrap();
            for (e, f) in eff.iter().zip(full_weights.iter()) {
                let x = expand_efficient(e, d).unwrap();
                assert!(max_abs_diff(&x.wv, &f.wv) <= 1e-15);
                assert!(max_abs_diff(&x.pqk, &f.pqk) <= 1e-15);
                assert!(max_abs_diff(&x.wr, &f.wr) <= 1e-15);
            }
            let phi_start = Array2::zeros((n, k));
            let z0 = TransformerState::standard(&g.incidence(), &psi, &phi_start).unwrap();
            let states = forward(&z0, &full_weights, false).unwrap();
            let mut p0 = Array2::zeros((2 * k, n));
            p0.slice_mut(s![0..k, ..]).assign(&psi.t());
            let traj = efficient_forward(&b0, &p0, &eff).unwrap();
            for l in 0..states.len() {
                let full_phi = states[l].z.slice(s![d..d + 2 * k, ..]).to_owned();
                let scale = max_abs(&full_phi).max(1.0);
                let gap = max_abs_diff(&full_phi, &traj.phi[l]);
                assert!(
                    gap <= 1e-9 * scale,
                    "graph {i} task {} layer {l}: gap {gap}",
                    spec.kind.name()
                );
            }
        }

        // subspace config against raw (unnormalized) full dynamics
        let spec = base_spec(TaskKind::SubspaceTopK, 6, k);
        let eff = efficient_config(&spec).unwrap();
        let full = subspace_weights(d, k, 6, SubspaceMode::Top).unwrap();
        let phi0 = random_orthonormal(n, k, 950 + i as u64);
        let z0 = TransformerState::eig(&g.incidence(), &phi0).unwrap();
        let states = forward(&z0, &full, false).unwrap();
        let mut p0 = Array2::zeros((2 * k, n));
        p0.slice_mut(s![k..2 * k, ..]).assign(&phi0.t());
        let traj = efficient_forward(&b0, &p0, &eff).unwrap();
        for l in 0..states.len() {
            let full_phi = states[l].z.slice(s![d..d + k, ..]).to_owned();
            let eff_phi = traj.phi[l].slice(s![k..2 * k, ..]).to_owned();
            let scale = max_abs(&full_phi).max(1.0);
            let gap = max_abs_diff(&full_phi, &eff_phi);
            assert!(gap <= 1e-9 * scale, "graph {i} subspace layer {l}: gap {gap}");
        }
    }
    let elapsed = t0.elapsed();
    println!("PASS: constrained engine matches full trajectories on 20 graphs x 4 configs ({elapsed:?})");
}

fn random_config(k: usize, layers: usize, rng: &mut ChaCha8Rng) -> Vec<EfficientLayerWeights> {
    (0..layers)
        .map(|_| {
            let mut w = EfficientLayerWeights::zeros(k);
            w.alpha_v = rng.gen_range(-0.3..0.3);
            w.alpha_q = rng.gen_range(-0.3..0.3);
            w.alpha_k = rng.gen_range(-0.3..0.3);
            w.alpha_r = rng.gen_range(-0.3..0.3);
            for m in [&mut w.wv_phi, &mut w.wr_phi, &mut w.wq_phi, &mut w.wk_phi] {
                for x in m.iter_mut() {
                    *x = rng.gen_range(-0.3..0.3);
                }
            }
            w
        })
        .collect()
}

#[test]
fn edge_permutation_equivariance_holds_on_random_triples() {
    let t0 = Instant::now();
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + trial);
        let n = 6 + (trial as usize % 5);
        let g = if trial % 2 == 0 {
            generate_fc(n, trial).unwrap()
        } else {
            generate_csl(n, 2 + (trial as usize % 3), trial).unwrap()
        };
        let k = 1 + (trial as usize % 3);
        let config = random_config(k, 4, &mut rng);
        let mut phi0 = Array2::zeros((2 * k, n));
        for x in phi0.iter_mut() {
            *x = rng.gen_range(-1.0..1.0);
        }
        let mut perm: Vec<usize> = (0..g.d()).collect();
        for i in (1..perm.len()).rev() {
            let j = rng.gen_range(0..=i);
            perm.swap(i, j);
        }
        let verdict = gfl_core::verify::check_equivariance(&g, &config, &perm, &phi0).unwrap();
        assert!(
            verdict.pass,
            "trial {trial}: violation at layer {:?}, worst {}",
            verdict.first_violation, verdict.worst
        );
    }
    let elapsed = t0.elapsed();
    println!("PASS: edge permutation equivariance on 100 random triples ({elapsed:?})");
}

#[test]
fn oracle_identities_self_consistent() {
    let t0 = Instant::now();
    let mut graphs = Vec::new();
    for n in [5usize, 12, 20] {
        graphs.push(generate_fc(n, 7).unwrap());
        graphs.push(generate_csl(n, 2, 7).unwrap());
    }
    for (i, g) in graphs.iter().enumerate() {
        let lap = g.laplacian().as_mat().to_owned();
        let dec = sym_eig(&lap).unwrap();
        let p = pinv_psd_from(&dec).unwrap();
        let scale = max_abs(&lap);

        let lpl = lap.dot(&p).dot(&lap);
        assert!(max_abs_diff(&lpl, &lap) <= 1e-8 * scale, "graph {i}: L P L");
        let plp = p.dot(&lap).dot(&p);
        assert!(max_abs_diff(&plp, &p) <= 1e-8 * max_abs(&p).max(1.0), "graph {i}: P L P");
        let lp = lap.dot(&p);
        assert!(max_abs_diff(&lp.t().to_owned(), &lp) <= 1e-8, "graph {i}: (L P) symmetric");

        let sq = sqrt_pinv_from(&dec).unwrap();
        assert!(
            max_abs_diff(&sq.dot(&sq), &p) <= 1e-8 * max_abs(&p).max(1.0),
            "graph {i}: sqrt squared"
        );

        let h1 = heat_kernel_from(&dec, 0.3).unwrap();
        let h2 = heat_kernel_from(&dec, 0.4).unwrap();
        let h3 = heat_kernel_from(&dec, 0.7).unwrap();
        assert!(max_abs_diff(&h1.dot(&h2), &h3) <= 1e-7, "graph {i}: heat semigroup");

        let q = random_orthonormal(g.n, 3, 40 + i as u64);
        let gram = q.t().dot(&q);
        let eye = Array2::eye(3);
        assert!(max_abs_diff(&gram, &eye) <= 1e-10, "graph {i}: orthonormal columns");
    }
    let elapsed = t0.elapsed();
    println!("PASS: oracle identities on {} graphs up to n=20 ({elapsed:?})", graphs.len());
}

#[test]
fn path_graph_solutions_are_oracle_exact() {
    let t0 = Instant::now();
    let g = Graph::new(2, vec![(0, 1, 1.0)]).unwrap();

    let mut spec = base_spec(TaskKind::ElectricGd, 1, 1);
    spec.delta = Some(0.5);
    let demands = sample_demands(2, 1, true, 3).unwrap();
    let report = run_task(&g, &spec, &demands, Engine::Full).unwrap();
    let err = report.layers[1].error;
    assert!(err <= 1e-12, "descent after one step: error {err}");

    let spec = base_spec(TaskKind::SqrtSeries, 1, 2);
    let report = run_task(&g, &spec, &identity_demands(2), Engine::Full).unwrap();
    let err = report.layers[1].error;
    assert!(err <= 1e-12, "sqrt single term: error {err}");

    let elapsed = t0.elapsed();
    println!("PASS: two-vertex path runs are oracle exact ({elapsed:?})");
}
