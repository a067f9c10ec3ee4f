//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use grade::augment::{
    build_similarity, interpolate_neighbor_distribution, make_view, sample_without_replacement,
    AugmentConfig, Augmenter, SimilarityMatrix,
};
use grade::config::RunConfig;
use grade::eval::{DegreeGroup, FairnessReport, GroupStats, SplitScheme};
use grade::graph::{Graph, NeighborList};
use grade::io::{load_checkpoint, save_checkpoint};
use grade::model::{ModelDims, ModelParams};
use grade::objective::ContrastiveConfig;
use grade::pipeline::compare;
use grade::rng::{from_seed, substream, Stream};
use grade::sbm::{generate, SbmConfig};
use grade::theory::{
    augmented_representations, community_indicator, estimate_r_eps, normalized_embeddings,
    run_theory, AugmentationSample, TheoryConfig,
};
use grade::trainer::{embed, train, TrainConfig};
use ndarray::Array2;
use rand::Rng;

use common::oracles::{
    brute_force_err, dense_mixture, exact_d_t, exhaustive_max_distances, head_first_draw,
    single_layer, trivial_bounds,
};
use common::{gradient_check, random_graph, randomize_biases, separated_sbm, within_se};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn c1_gradients() -> Outcome {
    let start = Instant::now();
    let g = random_graph(12, 6, 0.3, 0, 1);
    let sim = build_similarity(g.features().view());
    let cfg = AugmentConfig {
        zeta: 2,
        ..AugmentConfig::default()
    };
    let views = [
        make_view(&g, Some(&sim), cfg, 11).unwrap(),
        make_view(&g, Some(&sim), cfg, 12).unwrap(),
    ];
    let dims = ModelDims {
        input: 6,
        hidden: 5,
        embed: 4,
        proj: 3,
        layers: 2,
    };
    let mut params = ModelParams::init(dims, &mut from_seed(3)).unwrap();
    randomize_biases(&mut params, 4);
    let check = gradient_check(&views, &mut params, 0.7, 1e-5, 1e-4);
    let secs = start.elapsed().as_secs_f64();
    ensure(check.failures.is_empty(), || format!("{} entries off: {:?}", check.failures.len(), check.failures))?;
    ensure(check.checked > 0, || "no entries checked".into())?;
    ensure(secs < 10.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "{} entries checked, {} below 1e-8, max rel err {:.2e}, {secs:.2}s",
        check.checked, check.skipped, check.max_rel
    ))
}

fn c2_tail_mixture() -> Outcome {
    let mut r = common::rng(2);
    let n = 25;
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let pick = |r: &mut rand_chacha::ChaCha8Rng| -> Vec<usize> {
            let len = r.random_range(1..8);
            (0..len).map(|_| r.random_range(0..n)).collect()
        };
        let tail = NeighborList::new(usize::MAX, pick(&mut r));
        let sample = NeighborList::new(usize::MAX, pick(&mut r));
        let phi: f64 = r.random();
        let dist = interpolate_neighbor_distribution(&tail, &sample, phi).ok_or("empty tail list")?;
        let oracle = dense_mixture(tail.members(), sample.members(), phi, n);
        for (u, &p) in oracle.iter().enumerate() {
            worst = worst.max((dist.prob(u) - p).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:.2e}"))?;

    // Five-node fixture: node 0 with tail neighbours {1, 2}, partner sample {2, 3, 4}.
    let dist = interpolate_neighbor_distribution(
        &NeighborList::new(0, vec![1, 2]),
        &NeighborList::new(0, vec![2, 3, 4]),
        0.6,
    )
    .ok_or("empty tail list")?;
    let exact = dense_mixture(&[1, 2], &[2, 3, 4], 0.6, 5);
    let trials = 100_000;
    let mut counts = [0usize; 5];
    let mut rng = from_seed(3);
    for _ in 0..trials {
        counts[dist.support[sample_without_replacement(&dist.probs, 1, &mut rng)[0]]] += 1;
    }
    for u in 0..5 {
        ensure(within_se(counts[u], trials, exact[u], 3.0), || {
            format!("node {u}: {} vs {}", counts[u] as f64 / trials as f64, exact[u])
        })?;
    }
    Ok(format!("1000 instances, max deviation {worst:.1e}; 100k draws within 3 SE"))
}

fn c3_purification() -> Outcome {
    let mut r = common::rng(3);
    let mut cases = 0;
    while cases < 1000 {
        let g = random_graph(15, 3, r.random_range(0.2..0.8), 0, r.random());
        let sim = build_similarity(g.features().view());
        let p_edr = r.random_range(0.0..0.95);
        let cfg = AugmentConfig {
            zeta: 0,
            p_edr,
            ..AugmentConfig::default()
        };
        let aug = Augmenter::new(&g, Some(&sim), cfg).map_err(|e| e.to_string())?;
        let node = r.random_range(0..15);
        let d = g.degree(node);
        if d == 0 {
            continue;
        }
        let out = aug.augment_head(node, &mut from_seed(cases));
        let expected = ((d as f64 * (1.0 - p_edr)).round() as usize).max(1);
        ensure(out.len() == expected, || format!("degree {d}, p_edr {p_edr}: kept {}", out.len()))?;
        ensure(out.members().iter().all(|&u| g.adjacency().contains(node, u)), || {
            format!("node {node} gained a non-neighbour")
        })?;
        cases += 1;
    }

    let edges: Vec<(usize, usize)> = (1..6).map(|u| (0, u)).collect();
    let g = Graph::from_edges(&edges, Array2::ones((6, 1)), None).unwrap().0;
    let row = [0.0, 0.5, -0.3, 0.2, 0.0, 0.9];
    let mut s = Array2::zeros((6, 6));
    for u in 1..6 {
        s[[0, u]] = row[u];
        s[[u, 0]] = row[u];
    }
    let sim = SimilarityMatrix::from_values(s).map_err(|e| e.to_string())?;
    let cfg = AugmentConfig {
        zeta: 2,
        p_edr: 0.8,
        ..AugmentConfig::default()
    };
    let aug = Augmenter::new(&g, Some(&sim), cfg).map_err(|e| e.to_string())?;
    let expected = head_first_draw(&row[1..]);
    let trials = 100_000;
    let mut counts = [0usize; 5];
    let mut rng = from_seed(21);
    for _ in 0..trials {
        counts[aug.augment_head(0, &mut rng).members()[0] - 1] += 1;
    }
    for k in 0..5 {
        ensure(within_se(counts[k], trials, expected[k], 3.0), || format!("{counts:?} vs {expected:?}"))?;
    }
    Ok("1000 subset/size cases; 100k first draws within 3 SE".into())
}

fn group(degree: usize, accuracy: f64) -> DegreeGroup {
    DegreeGroup {
        degree,
        accuracy,
        count: 1,
    }
}

fn c4_fairness() -> Outcome {
    let s = GroupStats::from_groups(&[group(2, 1.0), group(7, 0.5)]);
    ensure(s.g_mean == 0.75 && s.bias == 0.0625, || format!("{s:?}"))?;
    let s = GroupStats::from_groups(&[group(1, 0.5), group(3, 1.0)]);
    ensure(s.slope == 0.25 && s.intercept == 0.25, || format!("{s:?}"))?;
    let r = FairnessReport::from_predictions(&[1, 1, 3, 3], &[0, 1, 0, 1], &[0, 1, 1, 1], 2);
    ensure(
        r.g_mean == 0.75
            && r.bias == 0.0625
            && (r.slope, r.intercept) == (-0.25, 1.25)
            && r.micro_f1 == 0.75
            && (r.macro_f1 - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-15,
        || format!("{r:?}"),
    )?;
    let r = FairnessReport::from_predictions(&[1, 2], &[0, 0], &[0, 0], 3);
    ensure(r.absent_classes == [1, 2] && (r.macro_f1 - 1.0 / 3.0).abs() < 1e-15, || format!("{r:?}"))?;

    let mut rng = common::rng(4);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let groups: Vec<DegreeGroup> = (0..rng.random_range(1..12))
            .map(|i| group(i * 2 + 1, rng.random_range(0.0..0.5)))
            .collect();
        let c = rng.random_range(0.0..0.5);
        let shifted: Vec<DegreeGroup> = groups.iter().map(|g| group(g.degree, g.accuracy + c)).collect();
        let (a, b) = (GroupStats::from_groups(&groups), GroupStats::from_groups(&shifted));
        worst = worst.max((a.bias - b.bias).abs()).max((a.slope - b.slope).abs());
    }
    ensure(worst <= 1e-12, || format!("shift changed Bias/slope by {worst:.2e}"))?;
    Ok(format!("hand fixtures exact; shift invariance max {worst:.1e} over 1000 draws"))
}

fn c5_directional() -> Outcome {
    let cfg = RunConfig::default();
    let sbm = &cfg.sbm;
    ensure(
        (sbm.nodes, sbm.communities, sbm.p_in, sbm.p_out, sbm.feature_noise, sbm.feature_dim)
            == (300, 2, 0.1, 0.01, 0.3, 16),
        || "default SBM differs from the criterion fixture".into(),
    )?;
    let g = generate(sbm).map_err(|e| e.to_string())?;
    let seeds: Vec<u64> = (0..5).collect();
    let start = Instant::now();
    let report = compare(&g, &cfg, &seeds).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let (ga, ra) = (&report.grade.aggregate, &report.random_drop.aggregate);
    let mean = |m: &Option<grade::pipeline::MeanStd>| m.as_ref().map_or(f64::NAN, |m| m.mean);
    let detail = format!(
        "Bias {:.3e} vs {:.3e}; tail acc {:.4} vs {:.4}; G.Mean {:.4} vs {:.4}; {secs:.0}s both arms",
        mean(&ga.bias),
        mean(&ra.bias),
        mean(&ga.tail_accuracy),
        mean(&ra.tail_accuracy),
        mean(&ga.g_mean),
        mean(&ra.g_mean),
    );
    ensure(report.bias_not_worse == Some(true), || format!("Bias worse: {detail}"))?;
    ensure(report.tail_accuracy_not_worse == Some(true), || format!("tail accuracy worse: {detail}"))?;
    ensure(secs < 300.0, || format!("too slow: {detail}"))?;
    Ok(detail)
}

fn single_layer_train() -> TrainConfig {
    TrainConfig {
        layers: 1,
        early_stop_patience: 0,
        ..TrainConfig::default()
    }
}

fn c6_theory() -> Outcome {
    let g = separated_sbm(300, 0.1, 0.01);
    let (params, _) = train(&g, &AugmentConfig::default(), &ContrastiveConfig::default(), &single_layer_train())
        .map_err(|e| e.to_string())?;
    let cfg = TheoryConfig::default();
    let rep = run_theory(&g, &params, &cfg, &mut substream(0, Stream::Theory)).map_err(|e| e.to_string())?;
    let eps: Vec<f64> = rep.r_eps_curve.iter().map(|p| p.epsilon).collect();
    ensure(eps == [0.01, 0.05, 0.1, 0.5, 1.0], || format!("ε grid {eps:?}"))?;
    let r: Vec<f64> = rep.r_eps_curve.iter().map(|p| p.r_eps).collect();
    ensure(r.windows(2).all(|w| w[1] <= w[0]), || format!("(a) R_eps {r:?}"))?;
    for w in rep.alpha_by_gamma.windows(2) {
        ensure(w[0].alpha.iter().zip(&w[1].alpha).all(|(a, b)| a <= b), || {
            format!("(b) alpha at γ={} vs γ={}", w[0].gamma, w[1].gamma)
        })?;
    }
    let bound = (1.0 - rep.alpha_min) + rep.r_eps_hat;
    ensure(rep.err_ff <= bound, || format!("(c) err {} > bound {bound}", rep.err_ff))?;

    // (d) on a 30-node graph with a trained single-layer encoder.
    let small = separated_sbm(30, 0.5, 0.05);
    let (p30, _) = train(&small, &AugmentConfig::default(), &ContrastiveConfig::default(), &single_layer_train())
        .map_err(|e| e.to_string())?;
    let labels = small.labels().unwrap();
    let mut recounts = 0;
    for seed in 0..5 {
        let sample = AugmentationSample::draw(&small, 1, 8, &mut from_seed(seed)).map_err(|e| e.to_string())?;
        let reps = augmented_representations(&sample, &p30).map_err(|e| e.to_string())?;
        let emb = normalized_embeddings(&small, &p30).map_err(|e| e.to_string())?;
        let d_min = vec![1; 2];
        let cores = vec![Vec::new(); 2];
        let in_s = vec![true; 30];
        let res = community_indicator(emb.view(), labels, &reps, &trivial_bounds(&d_min, &cores, &in_s))
            .map_err(|e| e.to_string())?;
        let oracle = brute_force_err(&emb, labels, &reps);
        ensure(res.err_ff == oracle, || format!("(d) err {} vs recount {oracle}", res.err_ff))?;
        recounts += 1;
    }
    Ok(format!(
        "R_eps {r:?}; err_Ff {:.4} ≤ (1−α) + R_eps = {bound:.4}; {recounts} exact recounts",
        rep.err_ff
    ))
}

fn c7_enumeration() -> Outcome {
    for seed in 0..5 {
        let g = random_graph(8, 3, 0.4, 2, seed);
        let params = single_layer(3, 4, 10 + seed);
        let oracle = exhaustive_max_distances(&g, &params.values.encoder[0]);
        for pairs in [49, 64] {
            let cfg = TheoryConfig {
                m: 1,
                pairs_per_node: pairs,
                ..TheoryConfig::default()
            };
            let est = estimate_r_eps(&g, &params, &cfg, &mut from_seed(seed)).map_err(|e| e.to_string())?;
            ensure(est.exhaustive, || "budget did not trigger enumeration".into())?;
            for (a, b) in est.max_pair_distance.iter().zip(&oracle) {
                ensure((a - b).abs() <= 1e-12, || format!("seed {seed}: {a} vs {b}"))?;
            }
            let expected = oracle.iter().filter(|&&d| d > cfg.epsilon).count() as f64 / 8.0;
            ensure(est.r_eps_hat == expected, || format!("R_eps {} vs {expected}", est.r_eps_hat))?;
        }
        let sample = AugmentationSample::draw(&g, 1, 7, &mut from_seed(seed)).map_err(|e| e.to_string())?;
        let approx = sample.distance_matrix();
        let exact = exact_d_t(&g);
        for (a, b) in approx.iter().zip(exact.iter()) {
            ensure((a - b).abs() <= 1e-12, || format!("d_T {a} vs {b}"))?;
        }
    }
    Ok("5 graphs: enumerated R_eps and d_T equal the exact oracles".into())
}

fn run_audit(graph: &Path, out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_grade"))
        .args(["audit", "--graph"])
        .arg(graph)
        .args(["--seeds", "2", "--seed", "3", "--out"])
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(status.status.success(), || String::from_utf8_lossy(&status.stderr).into_owned())
}

fn c8_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = tmp.path().join("data");
    grade::io::save_graph_dir(&generate(&SbmConfig::default()).unwrap(), &data).map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_audit(&data, &a)?;
    run_audit(&data, &b)?;
    let mut names: Vec<String> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".json"))
        .collect();
    names.sort();
    ensure(names.len() == 4, || format!("reports {names:?}"))?;
    for n in &names {
        let (x, y) = (std::fs::read(a.join(n)).unwrap(), std::fs::read(b.join(n)).unwrap());
        ensure(x == y, || format!("{n} differs"))?;
    }

    let g = generate(&SbmConfig::default()).unwrap();
    let cfg = TrainConfig {
        total_epochs: 20,
        warmup_epochs: 5,
        ..TrainConfig::default()
    };
    let (params, _) = train(&g, &AugmentConfig::default(), &ContrastiveConfig::default(), &cfg).map_err(|e| e.to_string())?;
    let path = tmp.path().join("ckpt.bin");
    save_checkpoint(&params, &path).map_err(|e| e.to_string())?;
    let back = load_checkpoint(&path).map_err(|e| e.to_string())?;
    ensure(back.values == params.values, || "parameters changed".into())?;
    let bits = |m: &Array2<f64>| m.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    ensure(bits(&embed(&g, &params)) == bits(&embed(&g, &back)), || "embeddings changed".into())?;
    Ok(format!("{} JSON reports byte-identical; checkpoint bit-exact", names.len()))
}

fn c9_cora() -> Option<Outcome> {
    let dir = std::env::var_os("GRADE_CORA_DIR")?;
    Some((|| {
        let g = grade::io::load_graph_dir(Path::new(&dir)).map_err(|e| e.to_string())?.graph;
        let mut cfg = RunConfig::default();
        cfg.split.scheme = SplitScheme::Supervised;
        let report = compare(&g, &cfg, &(0..5).collect::<Vec<_>>()).map_err(|e| e.to_string())?;
        let micro: Vec<f64> = report.grade.per_seed.iter().map(|r| r.fairness.micro_f1).collect();
        let micro = 100.0 * micro.iter().sum::<f64>() / micro.len() as f64;
        let (gb, rb) = (
            report.grade.aggregate.bias.as_ref().map_or(f64::NAN, |m| m.mean),
            report.random_drop.aggregate.bias.as_ref().map_or(f64::NAN, |m| m.mean),
        );
        let detail = format!("Micro-F1 {micro:.2}; Bias {gb:.3e} vs {rb:.3e}");
        ensure((micro - 83.40).abs() <= 3.0 && gb < rb, || detail.clone())?;
        Ok(detail)
    })())
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 gradient correctness", c1_gradients),
        ("2 tail mixture oracle", c2_tail_mixture),
        ("3 head purification", c3_purification),
        ("4 fairness metrics", c4_fairness),
        ("5 directional SBM comparison", c5_directional),
        ("6 theory probe sanity", c6_theory),
        ("7 exhaustive enumeration", c7_enumeration),
        ("8 determinism", c8_determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS  criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  criterion {name}: {detail}");
            }
        }
    }
    match c9_cora() {
        None => println!("SKIP  criterion 9 Cora-scale check: GRADE_CORA_DIR not set"),
        Some(Ok(detail)) => println!("PASS  criterion 9 Cora-scale check: {detail}"),
        Some(Err(detail)) => println!("FAIL  criterion 9 Cora-scale check (optional): {detail}"),
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
