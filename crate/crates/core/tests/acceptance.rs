//! Acceptance suite: one verdict line per criterion, non-zero exit on any
//! unexpected failure.
//!
//! Criterion 4 asks for the printed right-hand side 231.0034; the formula as
//! stated evaluates to 231.2152 for those inputs, so that line reports FAIL
//! while its parent-count half passes. It is listed in `KNOWN_UNMET` and
//! does not fail the run.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use ebna::bayesnet::{parent_configuration_index, pls_sample, BayesianNetwork, DagStructure};
use ebna::genome::{Dataset, Direction, Gene};
use ebna::harness::{execute, schedule, AlgorithmKind, ExperimentConfig};
use ebna::rank_stats::{kruskal_wallis, pairwise_rank_grouping, SampleGroup};
use ebna::record::RunRecord;
use ebna::scores::{score_structure, Metric, Penalty};
use ebna::search::{algorithm_b, local_search, pc_learn, PcConfig};

const KNOWN_UNMET: &[u8] = &[4];

struct Verdict {
    id: u8,
    pass: bool,
}

fn verdict(id: u8, title: &str, pass: bool, detail: String, started: Instant) -> Verdict {
    println!(
        "criterion {id} {:<4} {title}: {detail} ({:.1} s)",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    Verdict { id, pass }
}

/// Runs `reps` seeded repetitions of each algorithm on one problem.
fn runs(problem: &str, algorithms: &str, reps: usize, extra: &[(&str, &str)]) -> Vec<RunRecord> {
    let mut cfg = ExperimentConfig::default();
    cfg.set("problem.name", problem).unwrap();
    cfg.set("run.algorithms", algorithms).unwrap();
    cfg.set("run.reps", &reps.to_string()).unwrap();
    cfg.set("run.seed", "20240501").unwrap();
    for (k, v) in extra {
        cfg.set(k, v).unwrap();
    }
    schedule(&cfg)
        .par_iter()
        .map(|spec| execute(spec, &cfg).expect("run succeeds"))
        .collect()
}

fn of<'a>(records: &'a [RunRecord], algorithm: &str) -> Vec<&'a RunRecord> {
    records.iter().filter(|r| r.algorithm == algorithm).collect()
}

fn mean(records: &[&RunRecord]) -> f64 {
    records.iter().map(|r| r.final_best).sum::<f64>() / records.len() as f64
}

fn criterion_1() -> Verdict {
    let t = Instant::now();
    let records = runs("onemax", "umda,mimic,ebna_pc,ebna_bic,ebna_k2pen", 10, &[]);
    let mut pass = true;
    let mut parts = Vec::new();
    for (algo, target) in [
        ("umda", 128.0),
        ("mimic", 128.0),
        ("ebna_bic", 128.0),
        ("ebna_k2pen", 128.0),
        ("ebna_pc", 126.0),
    ] {
        let rs = of(&records, algo);
        let hits = rs.iter().filter(|r| r.final_best >= target).count();
        pass &= rs.len() == 10 && hits >= 9;
        parts.push(format!("{algo} {hits}/10 >= {target}"));
    }
    verdict(1, "OneMax n=128 N=512", pass, parts.join(", "), t)
}

fn criterion_2() -> Verdict {
    let t = Instant::now();
    let records = runs("checkerboard", "umda,ebna_bic,ebna_k2pen", 10, &[]);
    let (umda, bic, k2) = (
        mean(&of(&records, "umda")),
        mean(&of(&records, "ebna_bic")),
        mean(&of(&records, "ebna_k2pen")),
    );
    let pass = bic >= umda + 5.0 && k2 >= umda + 5.0;
    verdict(
        2,
        "Checkerboard s=10 N=1000",
        pass,
        format!("mean umda {umda:.2}, ebna_bic {bic:.2}, ebna_k2pen {k2:.2}"),
        t,
    )
}

fn criterion_3() -> Verdict {
    let t = Instant::now();
    let records = runs(
        "sixpeaks",
        "umda,ebna_k2pen",
        5,
        &[("problem.n", "50"), ("problem.t_fraction", "0.3")],
    );
    let k2 = of(&records, "ebna_k2pen");
    let hits = k2.iter().filter(|r| r.final_best == 84.0).count();
    let (m_k2, m_umda) = (mean(&k2), mean(&of(&records, "umda")));
    let pass = hits >= 3 && m_k2 > m_umda;
    verdict(
        3,
        "SixPeaks n=50 t=15 N=1600",
        pass,
        format!("ebna_k2pen reaches 84 in {hits}/5, mean ebna_k2pen {m_k2:.2} vs umda {m_umda:.2}"),
        t,
    )
}

fn criterion_4() -> Verdict {
    let t = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_ebna"))
        .args([
            "bound",
            "--cards",
            "3x7,4,3x5,4,3x5,4",
            "--rows",
            "422",
            "--f",
            "1",
            "--variable",
            "8",
        ])
        .output()
        .expect("bound runs");
    let text = String::from_utf8_lossy(&out.stdout);
    let line = text.lines().find(|l| l.starts_with("variable 8")).unwrap_or("");
    let field = |name: &str| {
        line.split_whitespace()
            .find_map(|w| w.strip_prefix(name))
            .and_then(|v| v.parse::<f64>().ok())
    };
    let (rhs, pa) = (field("rhs="), field("pa="));
    let rhs_ok = rhs.is_some_and(|v| (v - 231.0034).abs() <= 1e-3);
    let pa_ok = pa == Some(5.0);
    verdict(
        4,
        "parent bound worked example",
        out.status.success() && rhs_ok && pa_ok,
        format!(
            "printed rhs={} (expected 231.0034 +/- 0.001: {}), pa={} (expected 5: {})",
            rhs.map_or("?".into(), |v| format!("{v:.4}")),
            if rhs_ok { "ok" } else { "mismatch" },
            pa.map_or("?".into(), |v| v.to_string()),
            if pa_ok { "ok" } else { "mismatch" }
        ),
        t,
    )
}

/// `ln k!` as an explicit sum of logs.
fn ln_factorial(k: usize) -> f64 {
    (2..=k).map(|v| (v as f64).ln()).sum()
}

/// Direct evaluation of either score: counts by scanning rows, log-factorials
/// by summation, no caching.
fn oracle_score(data: &Dataset, parents: &[Vec<usize>], metric: Metric) -> f64 {
    let cards = data.cardinalities();
    let n = data.len() as f64;
    let mut total = 0.0;
    for (i, pa) in parents.iter().enumerate() {
        let r = cards[i];
        let q: usize = pa.iter().map(|&p| cards[p]).product();
        let mut counts = vec![vec![0usize; r]; q];
        for row in data.rows() {
            let mut j = 0;
            for &p in pa.iter().rev() {
                j = j * cards[p] + row[p] as usize;
            }
            counts[j][row[i] as usize] += 1;
        }
        let dim = (q * (r - 1)) as f64;
        match metric {
            Metric::Bic => {
                for c in &counts {
                    let nij: usize = c.iter().sum();
                    for &nijk in c {
                        if nijk > 0 {
                            total += nijk as f64 * (nijk as f64 / nij as f64).ln();
                        }
                    }
                }
                total -= n.ln() / 2.0 * dim;
            }
            Metric::K2Pen(pen) => {
                let f = match pen {
                    Penalty::Aic => 1.0,
                    Penalty::Bic => n.ln() / 2.0,
                    Penalty::Constant(c) => c,
                };
                for c in &counts {
                    let nij: usize = c.iter().sum();
                    total += ln_factorial(r - 1) - ln_factorial(nij + r - 1);
                    for &nijk in c {
                        total += ln_factorial(nijk);
                    }
                }
                total -= f * dim;
            }
        }
    }
    total
}

/// Every way to spread `total` rows over `cells` cells.
fn compositions(total: usize, cells: usize) -> Vec<Vec<usize>> {
    if cells == 1 {
        return vec![vec![total]];
    }
    (0..=total)
        .flat_map(|first| {
            compositions(total - first, cells - 1).into_iter().map(move |mut rest| {
                rest.insert(0, first);
                rest
            })
        })
        .collect()
}

fn all_dags(n: usize) -> Vec<Vec<Vec<usize>>> {
    let choices: Vec<Vec<Vec<usize>>> = (0..n)
        .map(|i| {
            let others: Vec<usize> = (0..n).filter(|&v| v != i).collect();
            (0..1usize << others.len())
                .map(|mask| {
                    others
                        .iter()
                        .enumerate()
                        .filter(|(b, _)| mask >> b & 1 == 1)
                        .map(|(_, &v)| v)
                        .collect()
                })
                .collect()
        })
        .collect();
    let mut out = vec![Vec::new()];
    for opts in &choices {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<Vec<usize>>| {
                opts.iter().map(move |o| {
                    let mut p = prefix.clone();
                    p.push(o.clone());
                    p
                })
            })
            .collect();
    }
    out.into_iter()
        .filter(|p| DagStructure::from_parents(p.clone()).is_ok())
        .collect()
}

fn random_network(cards: &[usize], parents: Vec<Vec<usize>>, rng: &mut ChaCha8Rng) -> BayesianNetwork {
    let cpts = parents
        .iter()
        .enumerate()
        .map(|(i, pa)| {
            let q: usize = pa.iter().map(|&p| cards[p]).product();
            (0..q)
                .flat_map(|_| {
                    let w: Vec<f64> = (0..cards[i]).map(|_| rng.random_range(0.05..1.0)).collect();
                    let s: f64 = w.iter().sum();
                    w.into_iter().map(move |x| x / s)
                })
                .collect()
        })
        .collect();
    BayesianNetwork::new(DagStructure::from_parents(parents).unwrap(), cards.to_vec(), cpts).unwrap()
}

fn criterion_5() -> Verdict {
    let t = Instant::now();
    let metrics = [Metric::Bic, Metric::K2Pen(Penalty::Aic), Metric::K2Pen(Penalty::Bic)];

    // Scores depend on the rows only through their cell counts, so every
    // count vector stands for all row orders with those counts.
    let mut checked = 0usize;
    let mut worst: f64 = 0.0;
    for cards in [vec![2usize, 2], vec![2, 3]] {
        let cells: Vec<[Gene; 2]> = (0..cards[0])
            .flat_map(|a| (0..cards[1]).map(move |b| [a as Gene, b as Gene]))
            .collect();
        let structures = [vec![vec![], vec![]], vec![vec![], vec![0]], vec![vec![1], vec![]]];
        for total in 1..=10 {
            for counts in compositions(total, cells.len()) {
                let mut rows = Vec::new();
                for (cell, &c) in cells.iter().zip(&counts) {
                    rows.extend(std::iter::repeat_n(*cell, c));
                }
                let data = Dataset::from_rows(cards.clone(), &rows).unwrap();
                for parents in &structures {
                    let s = DagStructure::from_parents(parents.clone()).unwrap();
                    for m in metrics {
                        let got = score_structure(&s, &data, m).unwrap();
                        worst = worst.max((got - oracle_score(&data, parents, m)).abs());
                        checked += 1;
                    }
                }
            }
        }
    }
    let exact_ok = worst <= 1e-9;

    let dags = all_dags(3);
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut matches = [[0usize; 2]; 2];
    let mut below_arcless = 0;
    for _ in 0..100 {
        let cards: Vec<usize> = (0..3).map(|_| rng.random_range(2..=3)).collect();
        let truth = dags[rng.random_range(0..dags.len())].clone();
        let net = random_network(&cards, truth, &mut rng);
        let rows = rng.random_range(50..=600);
        let data = pls_sample(&net, rows, &mut rng);
        for (mi, m) in [Metric::Bic, Metric::K2Pen(Penalty::Aic)].into_iter().enumerate() {
            let best = dags
                .iter()
                .map(|p| oracle_score(&data, p, m))
                .fold(f64::NEG_INFINITY, f64::max);
            let arcless = oracle_score(&data, &[vec![], vec![], vec![]], m);
            let outcomes = [
                algorithm_b(&data, m, None),
                local_search(&data, m, &DagStructure::empty(3), None),
            ];
            for (si, out) in outcomes.iter().enumerate() {
                let score = oracle_score(&data, out.structure.parent_sets(), m);
                if score >= best - 1e-9 {
                    matches[mi][si] += 1;
                }
                if score < arcless - 1e-9 {
                    below_arcless += 1;
                }
            }
        }
    }
    let search_ok = matches.iter().flatten().all(|&c| c >= 80) && below_arcless == 0;
    verdict(
        5,
        "score oracles and search optimality",
        exact_ok && search_ok && dags.len() == 25,
        format!(
            "{checked} exhaustive 2-variable scores, max |diff| {worst:.1e}; {} DAGs; argmax matches of 100: \
             bic algorithm_b {} local_search {}, k2pen algorithm_b {} local_search {}; below arcless {below_arcless}",
            dags.len(),
            matches[0][0],
            matches[0][1],
            matches[1][0],
            matches[1][1]
        ),
        t,
    )
}

fn criterion_6() -> Verdict {
    let t = Instant::now();
    let cards = [2usize, 3, 2, 2, 3];
    let parents = vec![vec![], vec![], vec![0, 1], vec![2], vec![0, 3]];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let net = random_network(&cards, parents.clone(), &mut rng);
    let data = pls_sample(&net, 50_000, &mut rng);
    let (mut cells, mut worst) = (0usize, 0.0f64);
    for (i, pa) in parents.iter().enumerate() {
        let q: usize = pa.iter().map(|&p| cards[p]).product();
        let mut counts = vec![vec![0usize; cards[i]]; q];
        for row in data.rows() {
            counts[parent_configuration_index(pa, &cards, row)][row[i] as usize] += 1;
        }
        for (j, c) in counts.iter().enumerate() {
            let nij: usize = c.iter().sum();
            if nij < 1000 {
                continue;
            }
            for (k, &nijk) in c.iter().enumerate() {
                worst = worst.max((nijk as f64 / nij as f64 - net.theta(i, j, k)).abs());
                cells += 1;
            }
        }
    }
    verdict(
        6,
        "forward sampling fidelity",
        cells > 0 && worst <= 0.02,
        format!("{cells} cells with >= 1000 conditioning rows, max |freq - theta| {worst:.4}"),
        t,
    )
}

fn criterion_7() -> Verdict {
    let t = Instant::now();
    let g = |label: &str, v: Vec<f64>| SampleGroup::new(label, v);
    let kw = kruskal_wallis(
        &[
            g("a", vec![1., 2., 3.]),
            g("b", vec![4., 5., 6.]),
            g("c", vec![7., 8., 9.]),
        ],
        0.05,
    )
    .unwrap();
    let kw_ok = (kw.h - 7.2).abs() <= 1e-9 && kw.p_value > 0.027 && kw.p_value < 0.028 && kw.reject;

    // Best group well clear, four interleaved middle groups, worst well clear.
    let spread = |base: f64, offset: f64| (0..10).map(|k| base + k as f64 + offset).collect::<Vec<f64>>();
    let groups = vec![
        g("umda", spread(200.0, 0.3)),
        g("mimic", spread(200.0, 0.1)),
        g("ebna_pc", spread(200.0, 0.2)),
        g("ebna_bic", spread(300.0, 0.0)),
        g("ebna_k2pen", spread(200.0, 0.4)),
        g("ga", spread(100.0, 0.0)),
    ];
    let table = pairwise_rank_grouping(&groups, Direction::Maximize, 0.05).unwrap();
    let pattern: Vec<usize> = table.entries.iter().map(|e| e.group).collect();
    let order: Vec<&str> = table.entries.iter().map(|e| e.label.as_str()).collect();
    let pattern_ok = pattern == [1, 2, 2, 2, 2, 6] && order[0] == "ebna_bic" && order[5] == "ga";
    verdict(
        7,
        "Kruskal-Wallis and rank groups",
        kw_ok && pattern_ok,
        format!(
            "H={:.9} p={:.5} reject={}; groups {:?} for {:?}",
            kw.h, kw.p_value, kw.reject, pattern, order
        ),
        t,
    )
}

fn criterion_8() -> Verdict {
    let t = Instant::now();
    let s = DagStructure::from_arcs(3, &[(0, 2), (1, 2)]).unwrap();
    // C = A or B, flipped with probability 0.1
    let c = vec![0.9, 0.1, 0.1, 0.9, 0.1, 0.9, 0.1, 0.9];
    let net = BayesianNetwork::new(s, vec![2; 3], vec![vec![0.5, 0.5], vec![0.5, 0.5], c]).unwrap();
    let cfg = PcConfig {
        alpha: 0.01,
        ..PcConfig::default()
    };
    let recovered = (0..20)
        .filter(|&seed| {
            let data = pls_sample(&net, 5000, &mut ChaCha8Rng::seed_from_u64(800 + seed));
            let out = pc_learn(&data, &cfg);
            out.skeleton == [(0, 2), (1, 2)] && out.structure.has_arc(0, 2) && out.structure.has_arc(1, 2)
        })
        .count();
    verdict(
        8,
        "PC collider recovery",
        recovered >= 18,
        format!("{recovered}/20 seeds"),
        t,
    )
}

fn results_body(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    text.split_once('\n')
        .map_or(String::new(), |(_, rest)| rest.to_string())
}

fn criterion_9() -> Verdict {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut identical = 0;
    let cases = [
        ("onemax", "30"),
        ("checkerboard", "5"),
        ("sixpeaks", "20"),
        ("equalproducts", "20"),
    ];
    for (problem, n) in cases {
        let bodies: Vec<String> = ["1", "2"]
            .iter()
            .map(|jobs| {
                let out = dir.path().join(format!("{problem}-{jobs}.csv"));
                let status = Command::new(env!("CARGO_BIN_EXE_ebna"))
                    .args([
                        "run",
                        "--problem",
                        problem,
                        "--algo",
                        "all",
                        "--reps",
                        "2",
                        "--seed",
                        "9",
                        "--n",
                        n,
                        "--population",
                        "60",
                        "--max-evals",
                        "3000",
                        "--jobs",
                        jobs,
                        "-q",
                        "--out",
                    ])
                    .arg(&out)
                    .status()
                    .expect("run executes");
                assert!(status.success());
                results_body(&out)
            })
            .collect();
        if bodies[0] == bodies[1] && bodies[0].lines().count() == 1 + 2 * AlgorithmKind::all().len() {
            identical += 1;
        }
    }
    verdict(
        9,
        "determinism",
        identical == cases.len(),
        format!(
            "{identical}/{} problems give identical results files across repeated runs",
            cases.len()
        ),
        t,
    )
}

fn main() {
    let started = Instant::now();
    let verdicts = [
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(),
        criterion_8(),
        criterion_9(),
    ];
    let passed = verdicts.iter().filter(|v| v.pass).count();
    let unexpected: Vec<u8> = verdicts
        .iter()
        .filter(|v| !v.pass && !KNOWN_UNMET.contains(&v.id))
        .map(|v| v.id)
        .collect();
    println!(
        "acceptance: {passed}/{} criteria pass in {:.1} s; known unmet {:?}; unexpected failures {:?}",
        verdicts.len(),
        started.elapsed().as_secs_f64(),
        KNOWN_UNMET,
        unexpected
    );
    if !unexpected.is_empty() {
        std::process::exit(1);
    }
}
