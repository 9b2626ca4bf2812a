//! Acceptance suite: one PASS/FAIL line per criterion. Dataset-backed
//! criteria read simplex-triple directories from `$HYPERSET_DATA_DIR/<name>/`.
//! A criterion that ran and missed its bar exits nonzero. One whose dataset is
//! absent still prints FAIL, tagged `unavailable`, and does not.

mod common;

use std::collections::{BTreeSet, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use hyperset::autodiff::ParamStore;
use hyperset::classifier::f1;
use hyperset::encoder::{Encoder, EncoderConfig, Structure};
use hyperset::expander::normalized_set_difference;
use hyperset::harness::config::{ExperimentConfig, Task};
use hyperset::harness::cv::{run_cv, run_fold};
use hyperset::harness::dataset::load_simplex_triple;
use hyperset::harness::metrics::{to_jsonl, FoldKey, Metric, MetricRecord, Summary};
use hyperset::hypergraph::Hypergraph;
use hyperset::iso::{hyperedge_orbits, vertex_orbits};
use hyperset::par::Exec;
use hyperset::rng::stream;
use rand::Rng;

const NSD_EXAMPLE: f64 = 1.5;
const TRIVIAL_F1: f64 = 2.0 / 7.0;
const TRIVIAL_F1_TOL: f64 = 1e-12;
const INVARIANCE_TOL: f64 = 1e-9;
const INVARIANCE_CASES: usize = 100;
const INVARIANCE_MAX_N: usize = 30;
const ORBIT_MAX_N: usize = 8;
const EXPRESSIVITY_PAIRS: usize = 10;
const EXPRESSIVITY_SEEDS: [u64; 5] = [3, 17, 29, 41, 53];
const EXPRESSIVITY_GAP: f64 = 1e-6;
const GRAD_TOL: f64 = 1e-4;
const ENRON_F1_BAR: f64 = 0.55;
const ENRON_F1_FLOOR: f64 = 0.40;
const NDC_F1_BAR: f64 = 0.60;
const CLASSIFY_BUDGET: Duration = Duration::from_secs(15 * 60);
const ENRON_NSD_BAR: f64 = 1.30;
const BASELINE_SLACK: f64 = 0.05;
const EXPAND_BUDGET: Duration = Duration::from_secs(30 * 60);
const CONTACT_BUDGET: Duration = Duration::from_secs(30 * 60);

enum Failure {
    Missed(String),
    Unavailable(String),
}

impl From<String> for Failure {
    fn from(s: String) -> Self {
        Failure::Missed(s)
    }
}

type Verdict = Result<String, Failure>;

fn ensure(ok: bool, msg: String) -> Verdict {
    if ok {
        Ok(msg)
    } else {
        Err(Failure::Missed(msg))
    }
}

// 1 ------------------------------------------------------------------------

/// Minimum insert/delete/modify script turning `from` into `to`, by BFS
/// over subsets of a 6-element universe encoded as bitmasks.
fn edit_distance(from: u8, to: u8) -> u32 {
    let mut dist = [u32::MAX; 64];
    let mut q = VecDeque::from([from]);
    dist[from as usize] = 0;
    while let Some(s) = q.pop_front() {
        if s == to {
            return dist[s as usize];
        }
        let mut next = Vec::new();
        for x in 0..6 {
            let bit = 1u8 << x;
            if s & bit == 0 {
                next.push(s | bit);
            } else {
                next.push(s & !bit);
                for y in 0..6 {
                    let b2 = 1u8 << y;
                    if s & b2 == 0 {
                        next.push((s & !bit) | b2);
                    }
                }
            }
        }
        for t in next {
            if dist[t as usize] == u32::MAX {
                dist[t as usize] = dist[s as usize] + 1;
                q.push_back(t);
            }
        }
    }
    unreachable!()
}

fn members(mask: u8) -> Vec<usize> {
    (0..6).filter(|x| mask & (1 << x) != 0).collect()
}

fn criterion_1() -> Verdict {
    let example = normalized_set_difference(&[3, 5, 1, 4], &[1, 2]).map_err(|e| e.to_string())?;
    if example != NSD_EXAMPLE {
        return Err(Failure::Missed(format!(
            "example gave {example}, expected {NSD_EXAMPLE}"
        )));
    }
    let mut pairs = 0;
    for p in 0u8..64 {
        for t in 1u8..64 {
            let oracle = edit_distance(p, t) as f64 / t.count_ones() as f64;
            let got =
                normalized_set_difference(&members(p), &members(t)).map_err(|e| e.to_string())?;
            if got != oracle {
                return Err(Failure::Missed(format!(
                    "pred {:?} target {:?}: {got} vs oracle {oracle}",
                    members(p),
                    members(t)
                )));
            }
            pairs += 1;
        }
    }
    Ok(format!(
        "example = 1.5 exactly; {pairs} set pairs match the edit-script oracle"
    ))
}

// 2 ------------------------------------------------------------------------

fn criterion_2() -> Verdict {
    let positives = 577;
    let mut scored = vec![(1.0, true); positives];
    scored.extend(std::iter::repeat_n((1.0, false), 5 * positives));
    let got = f1(&scored, 0.5).map_err(|e| e.to_string())?;
    ensure(
        (got - TRIVIAL_F1).abs() <= TRIVIAL_F1_TOL,
        format!("F1 = {got}, target 2/7 = {TRIVIAL_F1}"),
    )
}

// 3 ------------------------------------------------------------------------

fn encoder(seed: u64) -> (ParamStore, Encoder) {
    let mut store = ParamStore::new();
    let enc = Encoder::new(EncoderConfig::new(8, 2), &mut store, &mut stream(seed, 0)).unwrap();
    (store, enc)
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn criterion_3() -> Verdict {
    let mut rng = stream(31, 0);
    let mut worst: f64 = 0.0;
    for case in 0..INVARIANCE_CASES as u64 {
        let n = rng.gen_range(2..=INVARIANCE_MAX_N);
        let m = rng.gen_range(1..=24);
        let h = common::random_hypergraph(5000 + case, n, m);
        let (pv, pe) = common::random_perms(5000 + case, n, m);
        let hp = h.permute(&pv, &pe).unwrap();
        let (store, enc) = encoder(case);
        let a = enc.encode(&store, &Structure::new(&h)).unwrap();
        let b = enc.encode(&store, &Structure::new(&hp)).unwrap();
        for v in 0..n {
            worst = worst.max(max_gap(
                a.final_vertex().row(v),
                b.final_vertex().row(pv[v]),
            ));
        }
        for e in 0..m {
            worst = worst.max(max_gap(a.final_edge().row(e), b.final_edge().row(pe[e])));
        }
        let ga = enc.hypergraph_rep(&store, &a).unwrap();
        let gb = enc.hypergraph_rep(&store, &b).unwrap();
        worst = worst.max(max_gap(&ga, &gb));
    }
    if worst > INVARIANCE_TOL {
        return Err(Failure::Missed(format!(
            "relabeling moved a representation by {worst:e}"
        )));
    }
    let mut orbit_worst: f64 = 0.0;
    let mut orbit_cases = 0;
    for case in 0..60u64 {
        let n = rng.gen_range(2..=ORBIT_MAX_N);
        let m = rng.gen_range(1..=6);
        let h = common::random_hypergraph(6000 + case, n, m);
        let (store, enc) = encoder(case);
        let st = enc.encode(&store, &Structure::new(&h)).unwrap();
        for o in vertex_orbits(&h).unwrap() {
            for &v in &o[1..] {
                orbit_worst = orbit_worst.max(max_gap(
                    st.final_vertex().row(o[0]),
                    st.final_vertex().row(v),
                ));
            }
        }
        for o in hyperedge_orbits(&h).unwrap() {
            for &e in &o[1..] {
                orbit_worst =
                    orbit_worst.max(max_gap(st.final_edge().row(o[0]), st.final_edge().row(e)));
            }
        }
        orbit_cases += 1;
    }
    ensure(
        orbit_worst <= INVARIANCE_TOL,
        format!(
            "{INVARIANCE_CASES} relabelings, max gap {worst:.1e}; {orbit_cases} orbit instances, max gap {orbit_worst:.1e}"
        ),
    )
}

// 4 ------------------------------------------------------------------------

fn gamma(h: &Hypergraph, seed: u64) -> Vec<f64> {
    let mut store = ParamStore::new();
    let enc = Encoder::new(EncoderConfig::new(16, 2), &mut store, &mut stream(seed, 0)).unwrap();
    enc.hypergraph_rep(&store, &enc.encode(&store, &Structure::new(h)).unwrap())
        .unwrap()
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn criterion_4() -> Verdict {
    let pairs = common::wl_pairs();
    if pairs.len() < EXPRESSIVITY_PAIRS {
        return Err(Failure::Missed(format!(
            "only {} curated pairs",
            pairs.len()
        )));
    }
    let mut weakest = f64::INFINITY;
    for (i, (a, b)) in pairs.iter().enumerate() {
        let best = EXPRESSIVITY_SEEDS
            .iter()
            .map(|&s| l2(&gamma(a, s), &gamma(b, s)))
            .fold(0.0, f64::max);
        if best <= EXPRESSIVITY_GAP {
            return Err(Failure::Missed(format!(
                "pair {i} never separated (best {best:e})"
            )));
        }
        weakest = weakest.min(best);
    }
    let mut iso_worst: f64 = 0.0;
    for (i, (a, _)) in pairs.iter().enumerate() {
        let (pv, pe) = common::random_perms(i as u64, a.num_vertices(), a.num_edges());
        let b = a.permute(&pv, &pe).unwrap();
        for s in EXPRESSIVITY_SEEDS {
            iso_worst = iso_worst.max(l2(&gamma(a, s), &gamma(&b, s)));
        }
    }
    ensure(
        iso_worst <= INVARIANCE_TOL,
        format!(
            "{} pairs separated (smallest best-seed gap {weakest:.2e}); isomorphic copies max gap {iso_worst:.1e}",
            pairs.len()
        ),
    )
}

// 5 ------------------------------------------------------------------------

fn criterion_5() -> Verdict {
    let c = common::gradcheck::classifier_worst();
    let d = common::gradcheck::discriminator_worst();
    ensure(
        c < GRAD_TOL && d < GRAD_TOL,
        format!("max relative error: classifier {c:.2e}, discriminator {d:.2e}"),
    )
}

// 6-8 ----------------------------------------------------------------------

fn dataset(name: &str) -> Result<Hypergraph, Failure> {
    let root = std::env::var_os("HYPERSET_DATA_DIR")
        .map(PathBuf::from)
        .ok_or_else(|| Failure::Unavailable(format!("{name}: HYPERSET_DATA_DIR is not set")))?;
    let dir = root.join(name);
    if !dir.is_dir() {
        return Err(Failure::Unavailable(format!(
            "{name}: {} not found",
            dir.display()
        )));
    }
    load_simplex_triple(&dir, name).map_err(|e| Failure::Missed(format!("{name}: {e}")))
}

fn expect_shape(name: &str, h: &Hypergraph, n: usize, m: usize) -> Result<(), String> {
    if (h.num_vertices(), h.num_edges()) != (n, m) {
        return Err(format!(
            "{name}: ingested n={}, m={}, expected n={n}, m={m}",
            h.num_vertices(),
            h.num_edges()
        ));
    }
    Ok(())
}

/// Pinned per-dataset configurations (also listed in the README).
fn classify_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::new(Task::Classify);
    c.hidden = 32;
    c.lr = 0.01;
    c.epochs = 300;
    c.patience = 20;
    c.seed = 0;
    c
}

fn expand_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::new(Task::Expand);
    c.hidden = 32;
    c.lr = 0.002;
    c.epochs = 30;
    c.batch_size = 32;
    c.disc_steps = 5;
    c.disc_output = hyperset::expander::DiscOutput::Abs;
    c.seed = 0;
    c
}

fn summary(records: &[MetricRecord], metric: Metric) -> f64 {
    records
        .iter()
        .find(|r| r.metric == metric && r.fold == FoldKey::Summary(Summary::Mean))
        .map_or(f64::NAN, |r| r.value)
}

fn criterion_6() -> Verdict {
    let mut notes = Vec::new();
    let mut failed = false;
    let mut missing = false;
    let runs: [(&str, usize, usize, f64); 2] = [
        ("email-Enron", 148, 577, ENRON_F1_BAR),
        ("NDC-classes", 1161, 679, NDC_F1_BAR),
    ];
    for (name, n, m, bar) in runs {
        let h = match dataset(name) {
            Ok(h) => h,
            Err(Failure::Unavailable(e)) => {
                notes.push(e);
                missing = true;
                continue;
            }
            Err(Failure::Missed(e)) => {
                notes.push(e);
                failed = true;
                continue;
            }
        };
        if let Err(e) = expect_shape(name, &h, n, m) {
            notes.push(e);
            failed = true;
            continue;
        }
        let start = Instant::now();
        let cv = run_cv(&h, name, &classify_config(), false, Exec::Parallel)
            .map_err(|e| e.to_string())?;
        let secs = start.elapsed();
        let f = summary(&cv.records, Metric::F1);
        let floor_ok = name != "email-Enron" || f > ENRON_F1_FLOOR;
        let ok = f >= bar && floor_ok && secs <= CLASSIFY_BUDGET;
        failed |= !ok;
        notes.push(format!(
            "{name}: mean F1 {f:.4} (bar {bar}) in {:.0}s",
            secs.as_secs_f64()
        ));
    }
    let notes = notes.join("; ");
    match (failed, missing) {
        (false, false) => Ok(notes),
        (false, true) => Err(Failure::Unavailable(notes)),
        _ => Err(Failure::Missed(notes)),
    }
}

fn criterion_7() -> Verdict {
    let h = dataset("email-Enron")?;
    expect_shape("email-Enron", &h, 148, 577)?;
    let start = Instant::now();
    let cv = run_cv(&h, "email-Enron", &expand_config(), false, Exec::Parallel)
        .map_err(|e| e.to_string())?;
    let secs = start.elapsed();
    let joint = summary(&cv.records, Metric::Nsd);
    let ind = summary(&cv.records, Metric::NsdIndependent);
    ensure(
        joint <= ENRON_NSD_BAR && joint <= ind + BASELINE_SLACK && secs <= EXPAND_BUDGET,
        format!(
            "mean NSD {joint:.4} (bar {ENRON_NSD_BAR}), independent top-K {ind:.4}, {:.0}s",
            secs.as_secs_f64()
        ),
    )
}

fn criterion_8() -> Verdict {
    let h = dataset("contact-high-school")?;
    expect_shape("contact-high-school", &h, 327, 1870)?;
    let start = Instant::now();
    let run = run_fold(
        &h,
        "contact-high-school",
        &classify_config(),
        0,
        false,
        Exec::Parallel,
    )
    .map_err(|e| e.to_string())?
    .ok_or_else(|| "fold 0 skipped".to_string())?;
    let secs = start.elapsed();
    ensure(
        secs <= CONTACT_BUDGET,
        format!(
            "fold 0 F1 {:.4} in {:.0}s",
            run.records[0].value,
            secs.as_secs_f64()
        ),
    )
}

// 9 ------------------------------------------------------------------------

fn criterion_9() -> Verdict {
    let mut classify = ExperimentConfig::new(Task::Classify);
    classify.hidden = 8;
    classify.epochs = 20;
    classify.seed = 9;
    let mut expand = ExperimentConfig::new(Task::Expand);
    expand.hidden = 8;
    expand.epochs = 3;
    expand.batch_size = 8;
    expand.cap = 2000;
    expand.seed = 9;
    let mut jobs: Vec<(String, Hypergraph, ExperimentConfig)> = vec![
        (
            "planted".into(),
            common::planted(3, 4, 8, 12, (2, 5)),
            classify,
        ),
        ("cores".into(), common::cores_with_noise(6, 5, 3, 1), expand),
    ];
    if let Ok(h) = dataset("email-Enron") {
        let mut c = classify_config();
        c.epochs = 30;
        jobs.push(("email-Enron".into(), h, c));
    }
    let mut lines = 0;
    for (name, h, config) in &jobs {
        let run = |exec| -> Result<String, Failure> {
            run_cv(h, name, config, false, exec)
                .and_then(|cv| to_jsonl(&cv.records))
                .map_err(|e| Failure::Missed(e.to_string()))
        };
        let a = run(Exec::Parallel)?;
        let b = run(Exec::Parallel)?;
        let c = run(Exec::Sequential)?;
        if a != b || a != c {
            return Err(format!("{name}: metrics differ between identical runs").into());
        }
        lines += a.lines().count();
    }
    let names: BTreeSet<&str> = jobs.iter().map(|j| j.0.as_str()).collect();
    Ok(format!(
        "{lines} metric rows reproduced bit-exactly across 3 runs each ({})",
        names.into_iter().collect::<Vec<_>>().join(", ")
    ))
}

fn main() -> ExitCode {
    let criteria: [(u8, &str, fn() -> Verdict); 9] = [
        (1, "normalized set difference oracle", criterion_1),
        (2, "trivial-baseline F1 identity", criterion_2),
        (3, "invariance suite", criterion_3),
        (4, "expressivity suite", criterion_4),
        (5, "gradient checks", criterion_5),
        (6, "desk-scale classification", criterion_6),
        (7, "desk-scale expansion", criterion_7),
        (8, "contact-high-school ingestion and one fold", criterion_8),
        (9, "determinism", criterion_9),
    ];
    let (mut failures, mut unavailable) = (0, 0);
    for (id, name, f) in criteria {
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(Failure::Missed(format!("panicked: {msg}")))
        });
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(msg) => println!("criterion {id} PASS {name}: {msg} [{secs:.1}s]"),
            Err(Failure::Missed(msg)) => {
                failures += 1;
                println!("criterion {id} FAIL {name}: {msg} [{secs:.1}s]");
            }
            Err(Failure::Unavailable(msg)) => {
                unavailable += 1;
                println!("criterion {id} FAIL {name}: unavailable: {msg} [{secs:.1}s]");
            }
        }
    }
    println!(
        "acceptance: {} passed, {} failed ({unavailable} for lack of input data)",
        9 - failures - unavailable,
        failures + unavailable
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
