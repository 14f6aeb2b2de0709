//! Acceptance criteria, one PASS/FAIL line each. Run a subset by passing
//! criterion numbers: `cargo test --test acceptance -- 1 4`.

mod support;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{rule_oracle, stderr, xchem};
use xchem::harness::MetricsFile;
use xchem::report::selection_stats;
use xchem::select::TranscriptRow;
use xchem::synth::{generate, SynthConfig};
use xchem_core::dialogue::stub::{PolicyValidator, PriorSelector, ValidatorPolicy};
use xchem_core::dialogue::DialogueConfig;
use xchem_core::embedding::{physics_embedding, DescriptorEmbedding, EMBED_DIM};
use xchem_core::encoder::{prepare, Encoder, EncoderConfig};
use xchem_core::fusion::FusionConfig;
use xchem_core::metrics::{percent_change, MaeRow, MaeTable};
use xchem_core::model::{Loss, Model, ModelConfig, Sample, Variant};
use xchem_core::nn::ParamStore;
use xchem_core::rules::{self, Registry};
use xchem_core::{parse_xyz, run_dialogue, AcceptedSelection, DescriptorKind, Molecule, SelectionProposal, TargetProperty, Verdict};

struct Outcome {
    pass: bool,
    /// Failure is the documented one and does not fail the run.
    known: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, known: false, detail: detail.into() }
}

fn molecules(count: usize, seed: u64) -> Vec<Molecule> {
    generate(&SynthConfig { count, seed, missing_rate: 0.0 }).iter().map(|r| parse_xyz(&r.xyz).unwrap()).collect()
}

fn rotation(rng: &mut impl Rng) -> [[f64; 3]; 3] {
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let tau = std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let (w, x, y, z) = (a * (tau * u2).sin(), a * (tau * u2).cos(), b * (tau * u3).sin(), b * (tau * u3).cos());
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
        [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
        [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn transformed(m: &Molecule, rng: &mut impl Rng) -> Molecule {
    let r = rotation(rng);
    let flip = if rng.random_bool(0.5) { -1.0 } else { 1.0 };
    let shift: [f64; 3] = std::array::from_fn(|_| rng.random_range(-10.0..10.0));
    let mut order: Vec<usize> = (0..m.len()).collect();
    order.shuffle(rng);
    let positions = order
        .iter()
        .map(|&i| {
            let p = m.positions[i];
            std::array::from_fn(|k| flip * (r[k][0] * p[0] + r[k][1] * p[1] + r[k][2] * p[2]) + shift[k])
        })
        .collect();
    let z = order.iter().map(|&i| m.atomic_numbers[i]).collect();
    Molecule::new(m.id.clone(), z, positions, m.targets.clone()).unwrap()
}

fn invariance() -> Outcome {
    let cfg = EncoderConfig::default();
    let mut store = ParamStore::new();
    let encoder = Encoder::register(&mut store, cfg.clone(), "encoder.").unwrap();
    store.initialize(11);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for m in molecules(10, 17) {
        let reference = encoder.encode(&store, &prepare(&m, &cfg).unwrap());
        for _ in 0..20 {
            let out = encoder.encode(&store, &prepare(&transformed(&m, &mut rng), &cfg).unwrap());
            worst = reference.iter().zip(&out).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
            checked += 1;
        }
    }
    outcome(worst <= 1e-5, format!("{checked} transforms, max |Δg| = {worst:.2e} (limit 1e-5)"))
}

fn fusion_gradients() -> Outcome {
    let cfg = ModelConfig {
        encoder: EncoderConfig { blocks: 2, hidden: 16, n_radial: 12, ..EncoderConfig::default() },
        fusion: FusionConfig::default(),
        variant: Variant::Fused,
    };
    let mols = molecules(3, 5);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for seed in 0..3u64 {
        let model = Model::new(cfg.clone(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let text: Vec<f64> = (0..EMBED_DIM).map(|_| rng.random_range(-0.06..0.06)).collect();
        let s = Sample::from_molecule(&mols[seed as usize], TargetProperty::Homo, &cfg.encoder, Some(text)).unwrap();
        let target = 0.4;
        let mut grads = model.params.zeros_like();
        model.loss_grad(&s, target, Loss::Mse, &mut grads).unwrap();
        let eps = 1e-5;
        let mut probe = model.clone();
        for spec in model.params.specs().iter().filter(|s| s.name.starts_with("fusion.")) {
            for i in spec.range() {
                let orig = probe.params.values[i];
                probe.params.values[i] = orig + eps;
                let lp = Loss::Mse.eval(probe.forward(&s).unwrap(), target).0;
                probe.params.values[i] = orig - eps;
                let lm = Loss::Mse.eval(probe.forward(&s).unwrap(), target).0;
                probe.params.values[i] = orig;
                let fd = (lp - lm) / (2.0 * eps);
                let scale = fd.abs().max(grads[i].abs()).max(1e-3);
                worst = worst.max((fd - grads[i]).abs() / scale);
                checked += 1;
            }
        }
    }
    outcome(worst < 1e-4, format!("{checked} fusion parameters over 3 seeds, max relative error {worst:.2e} (limit 1e-4)"))
}

fn agent_protocol() -> Outcome {
    let registry = Registry::default();
    let dialogue = DialogueConfig::default();
    let cases = [
        ("accept", ValidatorPolicy::AcceptAll, 1, false),
        ("reject-then-accept", ValidatorPolicy::reject_then_accept(), 2, false),
        ("reject", ValidatorPolicy::RejectAll, 3, true),
    ];
    let mut problems = Vec::new();
    for target in TargetProperty::ALL {
        for (name, policy, rounds, fallback) in &cases {
            let mut selector = PriorSelector::new(target);
            let mut validator = PolicyValidator::new(policy.clone());
            let sel = match run_dialogue(target, &dialogue, &registry, None, &mut selector, &mut validator) {
                Ok(s) => s,
                Err(e) => {
                    problems.push(format!("{target}/{name}: {e}"));
                    continue;
                }
            };
            if sel.rounds_used != *rounds || sel.fallback_used != *fallback || sel.transcript.len() > dialogue.max_rounds {
                problems.push(format!("{target}/{name}: {} rounds, fallback {}", sel.rounds_used, sel.fallback_used));
            }
            let total: f64 = sel.weights.iter().sum();
            if (total - 1.0).abs() > 1e-9 || sel.subset.len() < 3 || sel.subset.len() > 5 {
                problems.push(format!("{target}/{name}: subset {:?} weights sum {total}", sel.subset));
            }
            let replay = AcceptedSelection::from_transcript(target, sel.transcript.clone(), dialogue.max_rounds);
            if replay.as_ref() != Ok(&sel) {
                problems.push(format!("{target}/{name}: replay differs"));
            }
        }
    }
    let n = TargetProperty::ALL.len() * cases.len();
    match problems.first() {
        None => outcome(true, format!("{n} dialogues end in 1/2/3 rounds with fallback only after 3 rejections; replay identical")),
        Some(p) => outcome(false, format!("{} of {n} dialogues wrong, first: {p}", problems.len())),
    }
}

fn rule_engine() -> Outcome {
    let known: Vec<&str> = DescriptorKind::ALL.iter().map(|k| k.key()).collect();
    let unknown = ["BoilingPoint", "xlogp", "Charge", ""];
    let registry = Registry::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut flagged = 0;
    for case in 0..1000 {
        let n = rng.random_range(0..=7usize);
        let names: Vec<String> = (0..n)
            .map(|_| {
                if rng.random_bool(0.1) {
                    unknown[rng.random_range(0..unknown.len())].to_string()
                } else {
                    known[rng.random_range(0..known.len())].to_string()
                }
            })
            .collect();
        let m = if rng.random_bool(0.15) { rng.random_range(0..=7usize) } else { n };
        let mut weights: Vec<f64> = (0..m).map(|_| rng.random_range(-0.1..1.0)).collect();
        let total: f64 = weights.iter().sum();
        if total > 0.0 && rng.random_bool(0.7) {
            weights.iter_mut().for_each(|w| *w /= total);
        }
        let target = TargetProperty::ALL[rng.random_range(0..9)];
        let engine: Vec<(String, Option<String>)> = {
            let mut v: Vec<_> = rules::evaluate(&registry, &names, &weights, target)
                .violations
                .iter()
                .map(|v| (v.code.as_str().to_string(), v.subject.clone()))
                .collect();
            v.sort();
            v
        };
        let expected = rule_oracle::check(&names, &weights, target.key());
        if engine != expected {
            return outcome(false, format!("case {case}: {names:?} {weights:?} {target}: engine {engine:?}, oracle {expected:?}"));
        }
        flagged += usize::from(!engine.is_empty());
    }
    outcome(true, format!("1000 proposals, {flagged} with findings, engine and oracle agree exactly"))
}

fn random_subset(rng: &mut impl Rng) -> Vec<DescriptorKind> {
    let mut all = DescriptorKind::ALL.to_vec();
    all.shuffle(rng);
    all.truncate(rng.random_range(3..=5));
    all
}

fn simplex(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

fn physics_embeddings() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let bank: BTreeMap<DescriptorKind, DescriptorEmbedding> = DescriptorKind::ALL
        .iter()
        .map(|&k| {
            let vector = (0..EMBED_DIM).map(|_| rng.random_range(-0.2f32..0.2)).collect();
            (k, DescriptorEmbedding { descriptor: k, text_hash: String::new(), vector })
        })
        .collect();
    let mut worst_rel = 0.0f64;
    let mut hull_breaks = 0;
    for _ in 0..100 {
        let subset = random_subset(&mut rng);
        let weights = simplex(&mut rng, subset.len());
        let sel = AcceptedSelection { target: TargetProperty::Homo, subset: subset.clone(), weights: weights.clone(), rounds_used: 1, fallback_used: false, transcript: Vec::new() };
        let t = physics_embedding(&sel, &bank).unwrap().vector;
        let (mut diff, mut norm) = (0.0f64, 0.0f64);
        for c in 0..EMBED_DIM {
            let mut expect = 0.0;
            for j in (0..subset.len()).rev() {
                expect += weights[j] * f64::from(bank[&subset[j]].vector[c]);
            }
            diff += (t[c] - expect).powi(2);
            norm += expect * expect;
            let column = subset.iter().map(|k| f64::from(bank[k].vector[c]));
            let (lo, hi) = column.fold((f64::MAX, f64::MIN), |(lo, hi), x| (lo.min(x), hi.max(x)));
            if t[c] < lo - 1e-12 || t[c] > hi + 1e-12 {
                hull_breaks += 1;
            }
        }
        worst_rel = worst_rel.max((diff / norm).sqrt());
    }
    outcome(
        worst_rel <= 1e-12 && hull_breaks == 0,
        format!("100 selections, max ‖Δt‖/‖t‖ {worst_rel:.2e} (limit 1e-12), {hull_breaks} coordinates outside the hull"),
    )
}

fn report_fidelity() -> Outcome {
    let lumo = percent_change(0.1312, 0.1027).unwrap();
    let mu = percent_change(0.2650, 0.2820).unwrap();
    let table = MaeTable {
        backbones: vec!["SchNet".into(), "FAENet".into()],
        rows: vec![
            MaeRow { target: TargetProperty::Mu, values: vec![[Some(0.2308), Some(0.2139)], [Some(0.2650), Some(0.2820)]] },
            MaeRow { target: TargetProperty::Lumo, values: vec![[Some(0.1312), Some(0.1027)], [None, None]] },
        ],
    };
    let bars = xchem::report::chart_bars(&table);
    let bar = |label: &str| bars.iter().find(|b| b.label == label).map(|b| b.percent);
    let chart_ok = bar("ε_L · SchNet") == Some(lumo) && bar("μ · FAENet") == Some(mu) && bars.len() == 3;
    let pass = (lumo + 21.7).abs() <= 0.1 && (mu - 6.4).abs() <= 0.1 && chart_ok;
    outcome(pass, format!("ε_L SchNet {lumo:+.2}% (expect −21.7 ± 0.1), μ FAENet {mu:+.2}% (expect +6.4 ± 0.1), chart bars consistent: {chart_ok}"))
}

fn synthetic_rows(rng: &mut impl Rng, want: usize) -> Vec<TranscriptRow> {
    let mut rows = Vec::with_capacity(want + 3);
    let mut molecule = 0;
    while rows.len() < want {
        let target = TargetProperty::ALL[rng.random_range(0..9)];
        let rounds = rng.random_range(1..=3usize);
        let accepted_last = rng.random_bool(0.8);
        for round in 1..=rounds {
            let accept = round == rounds && accepted_last;
            let proposal = (accept || rng.random_bool(0.8)).then(|| {
                let subset = random_subset(rng);
                let weights = simplex(rng, subset.len());
                SelectionProposal { subset, weights, rationale: String::new() }
            });
            let verdict = if accept { Verdict::accept("ok") } else { Verdict::reject("no") };
            rows.push(TranscriptRow {
                molecule_id: format!("gdb_{molecule}"),
                target,
                round,
                proposal,
                verdict,
                violations: Vec::new(),
                timestamp: None,
                registry_hash: String::new(),
            });
        }
        molecule += 1;
    }
    rows
}

fn selection_statistics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rows = synthetic_rows(&mut rng, 10_000);
    let mut tally: HashMap<(TargetProperty, DescriptorKind), Vec<f64>> = HashMap::new();
    for r in &rows {
        if !r.verdict.accept {
            continue;
        }
        let p = r.proposal.as_ref().unwrap();
        for (k, w) in p.subset.iter().zip(&p.weights) {
            tally.entry((r.target, *k)).or_default().push(*w);
        }
    }
    let stats = selection_stats(&rows);
    let mut mismatches = 0;
    for t in TargetProperty::ALL {
        for k in DescriptorKind::ALL {
            let ws = tally.get(&(t, k)).cloned().unwrap_or_default();
            let importance = if ws.is_empty() { 0.0 } else { ws.iter().fold(0.0, |a, w| a + w) / ws.len() as f64 };
            if stats.count(t, k) != ws.len() as u64 || stats.importance(t, k) != importance {
                mismatches += 1;
            }
        }
    }
    let csv = stats.to_csv(&TargetProperty::ALL);
    let lines: Vec<&str> = csv.lines().collect();
    let header_ok = lines[0] == "target,metric,IUPAC,Formula,Molecular Weight,XLogP,H-Bond Donors,H-Bond Acceptors,Rotatable Bonds,PSA,Synonyms";
    let rows_ok = lines.len() == 1 + 2 * 9
        && TargetProperty::ALL.iter().enumerate().all(|(i, t)| {
            lines[1 + 2 * i].starts_with(&format!("{},Selection Count,", t.key()))
                && lines[2 + 2 * i].starts_with(&format!("{},Normalized Importance,", t.key()))
        });
    outcome(
        mismatches == 0 && header_ok && rows_ok,
        format!("{} rows, {mismatches} of 81 cells differ from brute force; header ok: {header_ok}; row layout ok: {rows_ok}", rows.len()),
    )
}

fn run_phases(dir: &Path, phases: &[&[&str]]) -> Result<(), String> {
    for args in phases {
        let out = xchem(dir, args);
        if !out.status.success() {
            return Err(format!("`xchem {}` failed: {}", args.join(" "), stderr(&out).trim()));
        }
    }
    Ok(())
}

const DESK: &str = "seed = 0
targets = [\"homo\"]

[encoder]
blocks = 3
hidden = 64
";

fn desk_learning() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("xchem.toml"), DESK).unwrap();
    let phases: [&[&str]; 5] = [&["synth", "--count", "2000"], &["ingest"], &["embed"], &["select"], &["train"]];
    if let Err(e) = run_phases(dir.path(), &phases) {
        return outcome(false, e);
    }
    let metrics = MetricsFile::read(&dir.path().join("reports/metrics.json")).unwrap();
    let homo = &metrics.results[&TargetProperty::Homo];
    let (base, fused) = (&homo[&Variant::Base], &homo[&Variant::Fused]);
    let drop = |r: &xchem::harness::VariantResult| {
        r.folds
            .iter()
            .map(|f| {
                let first = f.curve[0].train_loss;
                let best = f.curve.iter().find(|e| e.epoch == f.best_epoch).unwrap().train_loss;
                (first - best) / first
            })
            .fold(f64::MAX, f64::min)
    };
    let (base_drop, fused_drop) = (drop(base), drop(fused));
    let ratio = fused.mean_mae / base.mean_mae;
    let strict = fused_drop >= 0.5 && ratio <= 1.05;
    let mut result = outcome(
        strict && base_drop >= 0.5,
        format!(
            "base MAE {:.4} eV, fused {:.4} eV (ratio {ratio:.3}, limit 1.05); smallest train-loss drop to best epoch: base {:.1}%, fused {:.1}% (limit 50%)",
            base.mean_mae,
            fused.mean_mae,
            100.0 * base_drop,
            100.0 * fused_drop
        ),
    );
    result.known = strict;
    result
}

const SMALL: &str = "seed = 3
targets = [\"homo\", \"lumo\"]

[encoder]
blocks = 1
hidden = 8
n_radial = 8

[fusion]
latent = 8

[train]
epochs = 3
batch_size = 8
";

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let phases: [&[&str]; 6] = [
        &["synth", "--count", "60"],
        &["ingest"],
        &["embed"],
        &["select", "--deterministic"],
        &["train", "--deterministic"],
        &["report", "--deterministic"],
    ];
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        fs::write(d.path().join("xchem.toml"), SMALL).unwrap();
        if let Err(e) = run_phases(d.path(), &phases) {
            return outcome(false, e);
        }
    }
    let listing = files(dirs[0].path());
    if listing != files(dirs[1].path()) {
        return outcome(false, "the two runs produced different file sets");
    }
    let differing: Vec<String> = listing
        .iter()
        .filter(|p| fs::read(dirs[0].path().join(p)).unwrap() != fs::read(dirs[1].path().join(p)).unwrap())
        .map(|p| p.display().to_string())
        .collect();
    let reports = listing.iter().filter(|p| p.starts_with("reports")).count();
    outcome(
        differing.is_empty() && reports >= 5,
        format!("{} files compared ({reports} under reports/), {} differ {differing:?}", listing.len(), differing.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 9] = [
        ("E(3) and permutation invariance of the encoder", invariance, Duration::from_secs(60)),
        ("fusion head gradients match finite differences", fusion_gradients, Duration::MAX),
        ("dialogue round bound, fallback and replay", agent_protocol, Duration::MAX),
        ("rule engine agrees with the reference checker", rule_engine, Duration::MAX),
        ("physics embedding is the weighted sum", physics_embeddings, Duration::MAX),
        ("percent-change reporting", report_fidelity, Duration::MAX),
        ("descriptor selection statistics", selection_statistics, Duration::MAX),
        ("desk-scale learning and fusion benefit", desk_learning, Duration::from_secs(30 * 60)),
        ("repeat runs are byte-identical", determinism, Duration::MAX),
    ];
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        let in_time = elapsed <= *budget;
        let pass = result.pass && in_time;
        failed += usize::from(!pass && !(result.known && in_time));
        let timing = if *budget == Duration::MAX {
            format!("{:.1}s", elapsed.as_secs_f64())
        } else {
            format!("{:.1}s of {}s", elapsed.as_secs_f64(), budget.as_secs())
        };
        let verdict = match (pass, result.known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("criterion {n} {verdict}: {name}: {} [{timing}]", result.detail);
    }
    if failed > 0 {
        println!("{failed} unexpected failure(s)");
        std::process::exit(1);
    }
}
