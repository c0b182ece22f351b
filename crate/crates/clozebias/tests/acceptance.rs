//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use clozebias::bridge::record::{read_logprob_file, validate_http_response, write_logprob_file};
use clozebias::config::{ProviderSpec, RunConfig};
use clozebias::corpus_io::{parse_corpus, read_corpus, write_corpus};
use clozebias::pipeline::{export_sentences, run};
use clozebias::report::{to_markdown, BiasReport};
use clozebias_core::corpus::{neutralize, ContextKind, Family, NeutralEntity};
use clozebias_core::embedding::EmbeddingTable;
use clozebias_core::metrics::{bias_ratios, kl_divergence, weat, RatioAggregation, WeatSets, WeatStatistic};
use clozebias_core::mock::MockLm;
use clozebias_core::scoring::{assemble, cgs, ClozeMode, ContextSelector, LabelInput};
use common::{fixture, fixtures};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::Value;

const CGS_REL_TOL: f64 = 1e-10;
const ORACLE_TOL: f64 = 1e-9;
const RATIO_SUM_TOL: f64 = 1e-9;

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// Double-double arithmetic for the exp/log oracle.

#[derive(Clone, Copy, Debug)]
struct Dd(f64, f64);

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    Dd(s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd(s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> Dd {
    let p = a * b;
    Dd(p, a.mul_add(b, -p))
}

fn add(x: Dd, y: Dd) -> Dd {
    let s = two_sum(x.0, y.0);
    let t = two_sum(x.1, y.1);
    let e = s.1 + t.0;
    let u = quick_two_sum(s.0, e);
    quick_two_sum(u.0, u.1 + t.1)
}

fn mul(x: Dd, y: Dd) -> Dd {
    let p = two_prod(x.0, y.0);
    quick_two_sum(p.0, p.1 + (x.0 * y.1 + x.1 * y.0))
}

fn scale(x: Dd, f: f64) -> Dd {
    Dd(x.0 * f, x.1 * f)
}

const LN2: Dd = Dd(std::f64::consts::LN_2, 2.319_046_813_846_299_6e-17);

fn dd_exp(x: Dd) -> Dd {
    let k = (x.0 / LN2.0).round();
    let r = add(x, scale(LN2, -k));
    let r = scale(r, 1.0 / 1024.0);
    // expm1 by Taylor series, then (1+s)^2 - 1 = 2s + s^2 ten times.
    let mut term = r;
    let mut s = r;
    for n in 2..=16 {
        term = mul(term, scale(r, 1.0 / n as f64));
        if term.0 == 0.0 {
            break;
        }
        s = add(s, term);
    }
    for _ in 0..10 {
        s = add(scale(s, 2.0), mul(s, s));
    }
    let e = add(Dd(1.0, 0.0), s);
    let p = 2f64.powi(k as i32);
    Dd(e.0 * p, e.1 * p)
}

fn dd_ln(p: f64) -> Dd {
    let mut x = Dd(p.ln(), 0.0);
    for _ in 0..2 {
        // x + p * exp(-x) - 1
        let e = dd_exp(Dd(-x.0, -x.1));
        x = add(add(x, mul(Dd(p, 0.0), e)), Dd(-1.0, 0.0));
    }
    x
}

fn oracle_cgs(p: f64, sim: f64) -> f64 {
    let exponent = 1.0 - sim;
    let y = dd_exp(mul(dd_ln(p), Dd(exponent, 0.0)));
    y.0 + y.1
}

fn cgs_suite() -> Outcome {
    let mut ps: Vec<f64> = (0..200).map(|i| 10f64.powf(-6.0 + 6.0 * i as f64 / 199.0)).collect();
    ps[199] = 0.999;
    ps.push(1e-6);
    ps.push(0.5);
    let sims: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
    let mut worst: f64 = 0.0;
    let mut self_check: f64 = 0.0;
    for &p in &ps {
        let back = dd_exp(dd_ln(p));
        self_check = self_check.max(((back.0 - p) + back.1).abs() / p);
        check(cgs(p, 0.0).unwrap() == p, || format!("cgs({p}, 0) != {p}"))?;
        check(cgs(p, 1.0).unwrap() == 1.0, || format!("cgs({p}, 1) != 1"))?;
        let mut prev = f64::NEG_INFINITY;
        for &s in &sims {
            let v = cgs(p, s).unwrap();
            check(v > prev, || format!("not increasing at p={p}, sim={s}"))?;
            check(v >= p && v <= 1.0, || format!("cgs({p}, {s}) = {v} outside [p, 1]"))?;
            prev = v;
            let o = oracle_cgs(p, s);
            worst = worst.max((v - o).abs() / o);
        }
    }
    check(self_check < 1e-25, || format!("oracle self-check error {self_check:e}"))?;
    check(worst <= CGS_REL_TOL, || format!("max relative error {worst:e}"))?;
    Ok(format!(
        "{} p x {} sims, max rel err {worst:.2e} (tol {CGS_REL_TOL:e}), oracle self-check {self_check:.1e}",
        ps.len(),
        sims.len()
    ))
}

// ---------------------------------------------------------------------------

fn random_distribution(rng: &mut StdRng, n: usize, zeros: bool) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n)
        .map(|_| if zeros && rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() + 1e-9 })
        .collect();
    if v.iter().all(|x| *x == 0.0) {
        v[0] = 1.0;
    }
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    v
}

fn metric_identities() -> Outcome {
    let mut rng = StdRng::seed_from_u64(20_240_917);
    let mut min_kl = f64::INFINITY;
    for i in 0..1000 {
        let n = rng.random_range(2..=8);
        let p = random_distribution(&mut rng, n, i % 3 == 0);
        let q = random_distribution(&mut rng, n, i % 5 == 0);
        let (same, _) = kl_divergence(&p, &p).unwrap();
        check(same == 0.0, || format!("KL(P,P) = {same} for {p:?}"))?;
        let (kl, _) = kl_divergence(&p, &q).unwrap();
        check(kl >= 0.0, || format!("KL = {kl} < 0"))?;
        min_kl = min_kl.min(kl);
    }

    let words: Vec<String> = (0..24).map(|i| format!("w{i}")).collect();
    let mut weat_checks = 0;
    for _ in 0..200 {
        let rows: Vec<(String, Vec<f32>)> = words
            .iter()
            .map(|w| (w.clone(), (0..3).map(|_| rng.random_range(-1.0f32..1.0)).collect()))
            .collect();
        let table = EmbeddingTable::from_rows(rows.iter().map(|(w, v)| (w.as_str(), v.as_slice())), true).unwrap();
        let mut pick = |k: usize| -> Vec<String> { (0..k).map(|_| words[rng.random_range(0..words.len())].clone()).collect() };
        let sets = WeatSets {
            x: pick(3),
            y: pick(4),
            a: pick(5),
            b: pick(2),
        };
        let xy = WeatSets {
            x: sets.y.clone(),
            y: sets.x.clone(),
            ..sets.clone()
        };
        let ab = WeatSets {
            a: sets.b.clone(),
            b: sets.a.clone(),
            ..sets.clone()
        };
        for stat in [WeatStatistic::Raw, WeatStatistic::EffectSize] {
            let base = weat(&sets, &table, stat).unwrap().value;
            let sx = weat(&xy, &table, stat).unwrap().value;
            let sa = weat(&ab, &table, stat).unwrap().value;
            check(sx == -base && sa == -base, || format!("{stat:?}: {base} vs X<->Y {sx}, A<->B {sa}"))?;
            weat_checks += 1;
        }
    }

    let mut worst: f64 = 0.0;
    for t in 0..300 {
        let labels = ["a", "b", "c", "d"];
        let k = rng.random_range(2..=4);
        let results: Vec<_> = (0..rng.random_range(1..20))
            .map(|i| {
                let tie = t % 7 == 0;
                let inputs = labels[..k]
                    .iter()
                    .map(|l| LabelInput {
                        label: l.to_string(),
                        sentence: String::new(),
                        base_prob: if tie { 0.25 } else { rng.random_range(1e-6..1.0) },
                        similarities: Vec::new(),
                        exponent: if tie { 0.5 } else { rng.random_range(0.0..1.0) },
                    })
                    .collect();
                assemble(&i.to_string(), ClozeMode::ClozeLast, ContextSelector::Occupation, Vec::new(), inputs, &mut Vec::new())
                    .unwrap()
            })
            .collect();
        for agg in [RatioAggregation::MeanRatio, RatioAggregation::WinCount] {
            let total: f64 = bias_ratios(&results, agg).unwrap().iter().map(|(_, r)| r).sum();
            worst = worst.max((total - 1.0).abs());
        }
    }
    check(worst <= RATIO_SUM_TOL, || format!("ratio sum off by {worst:e}"))?;
    Ok(format!(
        "1000 KL pairs (min {min_kl:.2e}), {weat_checks} exact WEAT swaps, 600 ratio sums (max dev {worst:.1e})"
    ))
}

// ---------------------------------------------------------------------------
// Independent reference: everything from the raw files, no crate code.

fn fnv(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in *part {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

fn ref_tokens(text: &str) -> Vec<(String, usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let cjk = |c: char| matches!(c as u32, 0x3040..=0x30FF | 0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0xFF00..=0xFFEF);
    let word = |c: char| (c.is_alphanumeric() || c == '\'') && !cjk(c);
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let start = i;
        while i < chars.len() && chars[i].is_whitespace() {
            i += 1;
        }
        if i < chars.len() {
            if word(chars[i]) {
                while i < chars.len() && word(chars[i]) {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        out.push((chars[start..i].iter().collect(), start, i));
    }
    out
}

/// Probability of the characters `[start, end)` under the mock model, seed 0.
fn ref_prob(text: &str, start: usize, end: usize) -> f64 {
    let mut prefix = String::new();
    let mut log = 0.0;
    for (i, (tok, s, e)) in ref_tokens(text).into_iter().enumerate() {
        if i > 0 && s < end && e > start {
            let h = fnv(&[&0u64.to_le_bytes(), prefix.as_bytes(), &[0x1f], tok.as_bytes()]);
            log += -(1.0 + (h % 1000) as f64 / 1000.0);
        }
        prefix.push_str(&tok);
    }
    log.exp()
}

struct RefTable(BTreeMap<String, Vec<f64>>);

impl RefTable {
    fn load(path: &Path) -> Self {
        let text = std::fs::read_to_string(path).unwrap();
        let mut map = BTreeMap::new();
        for line in text.lines().skip(1) {
            let mut parts = line.split_whitespace();
            let word = parts.next().unwrap().to_lowercase();
            let v: Vec<f64> = parts.map(|x| f64::from(x.parse::<f32>().unwrap())).collect();
            map.entry(word).or_insert(v);
        }
        RefTable(map)
    }

    fn get(&self, w: &str) -> Option<&Vec<f64>> {
        self.0.get(&w.to_lowercase())
    }

    fn unit_mean(&self, words: &[&str]) -> Option<Vec<f64>> {
        let found: Vec<&Vec<f64>> = words.iter().filter_map(|w| self.get(w)).collect();
        if found.is_empty() {
            return None;
        }
        let mean: Vec<f64> = (0..3).map(|d| found.iter().map(|v| v[d]).sum::<f64>() / found.len() as f64).collect();
        let n = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
        Some(mean.iter().map(|x| x / n).collect())
    }

    fn sim(&self, a: &[&str], b: &[&str]) -> f64 {
        match (self.unit_mean(a), self.unit_mean(b)) {
            (Some(u), Some(v)) => cos(&u, &v).clamp(0.0, 1.0),
            _ => 0.0,
        }
    }
}

fn cos(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (nu * nv)
}

fn ref_weat(t: &RefTable, x: &[&str], y: &[&str], a: &[String], b: &[String]) -> Option<f64> {
    let vecs = |ws: Vec<&str>| -> Vec<Vec<f64>> { ws.into_iter().filter_map(|w| t.get(w).cloned()).collect() };
    let (x, y) = (vecs(x.to_vec()), vecs(y.to_vec()));
    let a = vecs(a.iter().map(String::as_str).collect());
    let b = vecs(b.iter().map(String::as_str).collect());
    if x.is_empty() || y.is_empty() || a.is_empty() || b.is_empty() {
        return None;
    }
    let mean_cos = |w: &Vec<f64>, set: &Vec<Vec<f64>>| set.iter().map(|s| cos(w, s)).sum::<f64>() / set.len() as f64;
    let s = |w: &Vec<f64>| mean_cos(w, &a) - mean_cos(w, &b);
    let mx = x.iter().map(s).sum::<f64>() / x.len() as f64;
    let my = y.iter().map(s).sum::<f64>() / y.len() as f64;
    Some(mx - my)
}

struct RefInstance {
    id: String,
    labels: Vec<String>,
    cgs: Vec<f64>,
    ratio: Vec<f64>,
    kl: f64,
    winner: Option<String>,
    words: Vec<String>,
}

fn ref_instance(id: &str, labels: &[&str], base: &[f64], exponents: &[f64], words: Vec<String>) -> RefInstance {
    let cgs: Vec<f64> = base.iter().zip(exponents).map(|(p, e)| p.powf(*e)).collect();
    let total: f64 = cgs.iter().sum();
    let ratio: Vec<f64> = cgs.iter().map(|c| c / total).collect();
    let btotal: f64 = base.iter().sum();
    let kl = base
        .iter()
        .zip(&ratio)
        .map(|(p, q)| {
            let b = p / btotal;
            if b == *q {
                0.0
            } else {
                b * (b / q).ln()
            }
        })
        .sum::<f64>()
        .max(0.0);
    let best = cgs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let top: Vec<usize> = (0..cgs.len()).filter(|&i| cgs[i] == best).collect();
    RefInstance {
        id: id.to_string(),
        labels: labels.iter().map(|s| s.to_string()).collect(),
        cgs,
        ratio,
        kl,
        winner: (top.len() == 1).then(|| labels[top[0]].to_string()),
        words,
    }
}

struct RefRow {
    context: String,
    instances: Vec<RefInstance>,
    ratios: Vec<f64>,
    kl: f64,
    weat: Option<f64>,
    hb: Option<f64>,
}

fn reference_rows() -> Vec<RefRow> {
    let table = RefTable::load(&fixture("emb3.txt"));
    let corpus: Vec<Value> = std::fs::read_to_string(fixture("corpus/genderlex12.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let field = |v: &Value, k: &str| v.get(k).and_then(Value::as_str).map(str::to_string);
    let genders = [("m", "him"), ("w", "her")];
    let groups: [(&str, &[&str]); 2] = [("black", &["black", "african"]), ("white", &["white", "european"])];
    let kinds = ["occupation", "noun", "verb"];
    let mut rows = Vec::new();

    for context in ["none", "occupation", "noun", "verb", "combined", "group"] {
        let mut instances = Vec::new();
        for inst in &corpus {
            let id = field(inst, "id").unwrap();
            let template = field(inst, "template").unwrap();
            let at = template.find("{P}").unwrap();
            let start = template[..at].chars().count();
            let fill = |pronoun: &str| template.replace("{P}", pronoun);
            let prob = |pronoun: &str| ref_prob(&fill(pronoun), start, start + pronoun.chars().count());
            let ctx_words = |k: &str| -> Vec<String> {
                field(inst, k).map(|s| s.split_whitespace().map(String::from).collect()).unwrap_or_default()
            };
            if context == "group" {
                let base = prob("them");
                let occ = ctx_words("occupation");
                let occ_refs: Vec<&str> = occ.iter().map(String::as_str).collect();
                let exps: Vec<f64> = groups.iter().map(|(_, terms)| 1.0 - table.sim(terms, &occ_refs)).collect();
                instances.push(ref_instance(&id, &["black", "white"], &[base, base], &exps, occ));
                continue;
            }
            let base: Vec<f64> = genders.iter().map(|(_, p)| prob(p)).collect();
            let used: Vec<&str> = match context {
                "none" => vec![],
                "combined" => kinds.to_vec(),
                k => vec![k],
            };
            let words: Vec<String> = used.iter().flat_map(|k| ctx_words(k)).collect();
            let exps: Vec<f64> = genders
                .iter()
                .map(|(_, p)| {
                    if used.is_empty() {
                        return 1.0;
                    }
                    let gaps: Vec<f64> = used
                        .iter()
                        .map(|k| {
                            let w = ctx_words(k);
                            1.0 - table.sim(&[p], &w.iter().map(String::as_str).collect::<Vec<_>>())
                        })
                        .collect();
                    gaps.iter().sum::<f64>() / gaps.len() as f64
                })
                .collect();
            instances.push(ref_instance(&id, &["m", "w"], &base, &exps, words));
        }
        let n = instances.len() as f64;
        let labels = instances[0].labels.clone();
        let ratios: Vec<f64> = (0..labels.len())
            .map(|i| instances.iter().map(|r| r.ratio[i]).sum::<f64>() / n)
            .collect();
        let kl = instances.iter().map(|r| r.kl).sum::<f64>() / n;
        let won = |l: &str| -> Vec<String> {
            instances
                .iter()
                .filter(|r| r.winner.as_deref() == Some(l))
                .flat_map(|r| r.words.clone())
                .collect()
        };
        let weat = match context {
            "none" => None,
            "group" => ref_weat(&table, groups[0].1, groups[1].1, &won("black"), &won("white")),
            _ => ref_weat(&table, &["him"], &["her"], &won("m"), &won("w")),
        };
        let hb = (context != "group").then(|| {
            let labelled: Vec<(String, Option<String>)> = corpus
                .iter()
                .filter_map(|c| field(c, "human_label").map(|h| (h, instances.iter().find(|r| Some(&r.id) == field(c, "id").as_ref()).unwrap().winner.clone())))
                .collect();
            labelled.iter().filter(|(h, w)| w.as_deref() == Some(h.as_str())).count() as f64 / labelled.len() as f64
        });
        rows.push(RefRow {
            context: context.to_string(),
            instances,
            ratios,
            kl,
            weat,
            hb,
        });
    }
    rows
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= ORACLE_TOL * b.abs().max(1.0)
}

fn golden_args() -> Vec<&'static str> {
    vec![
        "score",
        "--corpus",
        "corpus/genderlex12.jsonl",
        "--embeddings",
        "emb3.txt",
        "--mock",
        "--lexicon",
        "builtin:en-neutral",
    ]
}

fn oracle_equivalence() -> Outcome {
    let golden_text = std::fs::read_to_string(fixture("golden/genderlex12.json")).unwrap();
    let golden: Value = serde_json::from_str(&golden_text).unwrap();
    let rows = reference_rows();
    let mut compared = 0usize;
    let mut worst: f64 = 0.0;
    let mut cmp = |what: &str, got: f64, want: f64| -> Result<(), String> {
        compared += 1;
        worst = worst.max((got - want).abs());
        check(close(got, want), || format!("{what}: report {got} vs reference {want}"))
    };
    for r in &rows {
        let row = golden["rows"]
            .as_array()
            .unwrap()
            .iter()
            .find(|x| x["context"] == r.context.as_str())
            .ok_or_else(|| format!("no {} row", r.context))?;
        for (i, want) in r.ratios.iter().enumerate() {
            cmp(&format!("{} ratio {i}", r.context), row["ratios"][i]["ratio"].as_f64().unwrap(), *want)?;
        }
        cmp(&format!("{} kl", r.context), row["kl"].as_f64().unwrap(), r.kl)?;
        match (row["weat"].as_f64(), r.weat) {
            (Some(g), Some(w)) => cmp(&format!("{} weat", r.context), g, w)?,
            (None, None) => {}
            (g, w) => return Err(format!("{} weat presence differs: {g:?} vs {w:?}", r.context)),
        }
        match (row["human_agreement"].as_f64(), r.hb) {
            (Some(g), Some(w)) => cmp(&format!("{} hb", r.context), g, w)?,
            (None, None) => {}
            (g, w) => return Err(format!("{} hb presence differs: {g:?} vs {w:?}", r.context)),
        }
        let block = golden["instances"]
            .as_array()
            .unwrap()
            .iter()
            .find(|b| b["context"] == r.context.as_str())
            .ok_or_else(|| format!("no {} block", r.context))?;
        let results = block["results"].as_array().unwrap();
        check(results.len() == r.instances.len(), || format!("{} instance count", r.context))?;
        for (got, want) in results.iter().zip(&r.instances) {
            check(got["instance_id"] == want.id.as_str(), || format!("order differs at {}", want.id))?;
            for (i, v) in got["variants"].as_array().unwrap().iter().enumerate() {
                check(v["label"] == want.labels[i].as_str(), || format!("{} label order", want.id))?;
                cmp(&format!("{}/{} cgs", r.context, want.id), v["cgs"].as_f64().unwrap(), want.cgs[i])?;
                cmp(&format!("{}/{} ratio", r.context, want.id), v["ratio"].as_f64().unwrap(), want.ratio[i])?;
            }
        }
    }
    check(rows.iter().filter(|r| r.weat.is_some()).count() == 5, || "expected 5 WEAT values".into())?;

    let once = || {
        let out = Command::new(env!("CARGO_BIN_EXE_clozebias"))
            .current_dir(fixtures())
            .args(golden_args())
            .env("RUST_LOG", "error")
            .output()
            .unwrap();
        String::from_utf8(out.stdout).unwrap()
    };
    let (a, b) = (once(), once());
    check(a == b, || "two runs differ".into())?;
    check(a == golden_text, || "run differs from the checked-in golden report".into())?;
    Ok(format!(
        "{compared} values vs straight-line reference, max abs diff {worst:.1e} (tol {ORACLE_TOL:e}); golden byte-identical x2"
    ))
}

// ---------------------------------------------------------------------------

fn genderlex_config(lexicon: &str, ratio: RatioAggregation) -> RunConfig {
    let mut c = RunConfig::new(
        fixture("corpus/genderlex12.jsonl"),
        Family::Genderlex,
        vec![fixture("emb3.txt")],
        ProviderSpec::mock(),
    );
    c.lexicon = lexicon.to_string();
    c.ratio = ratio;
    c
}

fn pair_symmetry() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let swapped = dir.path().join("swapped.toml");
    std::fs::write(
        &swapped,
        "[[entries]]\nlabel = \"m\"\npronoun = \"her\"\nwords = [\"her\"]\n\n[[entries]]\nlabel = \"w\"\npronoun = \"him\"\nwords = [\"him\"]\n",
    )
    .unwrap();
    let mut cells = 0;
    for agg in [RatioAggregation::MeanRatio, RatioAggregation::WinCount] {
        let a = run(&genderlex_config("builtin:en", agg)).map_err(|e| e.to_string())?;
        let b = run(&genderlex_config(&swapped.display().to_string(), agg)).map_err(|e| e.to_string())?;
        check(a.rows.len() == b.rows.len(), || "row count differs".into())?;
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            let (am, aw) = (ra.ratios[0].ratio, ra.ratios[1].ratio);
            let (bm, bw) = (rb.ratios[0].ratio, rb.ratios[1].ratio);
            check(am == bw && aw == bm, || format!("{} ({agg:?}): ({am}, {aw}) vs ({bm}, {bw})", ra.context))?;
            check(ra.kl == rb.kl, || format!("{} KL differs", ra.context))?;
            cells += 2;
        }
        for (ba, bb) in a.instances.iter().zip(&b.instances) {
            for (x, y) in ba.results.iter().zip(&bb.results) {
                check(
                    x.variants[0].ratio == y.variants[1].ratio && x.variants[1].ratio == y.variants[0].ratio,
                    || format!("{} instance {} not swapped", ba.context, x.instance_id),
                )?;
                cells += 2;
            }
        }
    }
    Ok(format!("{cells} ratio cells swap exactly under both aggregations"))
}

fn corpus_round_trip() -> Outcome {
    let files = [
        ("corpus/genderlex12.jsonl", Family::Genderlex),
        ("corpus/genderlex_neutral.jsonl", Family::GenderlexNeutral),
        ("corpus/winograd.jsonl", Family::Winograd),
        ("corpus/crows_pairs.jsonl", Family::CrowsPairs),
        ("corpus/jp_pairs.jsonl", Family::JpPairs),
    ];
    let mut total = 0;
    for (file, family) in files {
        let path = fixture(file);
        let first = parse_corpus(&path, family).map_err(|e| e.to_string())?;
        let mut buf = Vec::new();
        write_corpus(&mut buf, &first).unwrap();
        let second = read_corpus(buf.as_slice(), &path, family).map_err(|e| e.to_string())?;
        check(first == second, || format!("{file}: round trip changed instances"))?;
        total += first.len();
    }
    let mut neutralized = 0;
    let genderlex = parse_corpus(&fixture("corpus/genderlex12.jsonl"), Family::Genderlex).unwrap();
    for entity in [NeutralEntity::Someone, NeutralEntity::Person] {
        for inst in &genderlex {
            let occupation = inst.context(ContextKind::Occupation).unwrap().to_lowercase();
            let n = neutralize(inst, entity).map_err(|e| e.to_string())?;
            check(n.context(ContextKind::Occupation).is_none(), || format!("{}: occupation kept", inst.id))?;
            let present = n
                .template
                .to_lowercase()
                .split(|c: char| !c.is_alphanumeric())
                .any(|w| w == occupation);
            check(!present, || format!("{}: {occupation:?} still in {:?}", inst.id, n.template))?;
            n.validate().map_err(|e| e.to_string())?;
            neutralized += 1;
        }
    }
    Ok(format!(
        "{total} instances across 5 families identical after round trip; neutralized {neutralized}/{neutralized}"
    ))
}

fn format_conformance() -> Outcome {
    let mut files = 0;
    let mut records = 0;
    for entry in std::fs::read_dir(fixture("logprobs")).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if name.ends_with(".manifest.jsonl") {
            continue;
        }
        let file = std::fs::File::open(&path).unwrap();
        records += read_logprob_file(std::io::BufReader::new(file), &path).map_err(|e| e.to_string())?.len();
        files += 1;
    }
    let emitted = [
        ("corpus/genderlex12.jsonl", Family::Genderlex, "builtin:en-neutral"),
        ("corpus/genderlex_neutral.jsonl", Family::GenderlexNeutral, "builtin:en"),
        ("corpus/winograd.jsonl", Family::Winograd, "builtin:en"),
        ("corpus/jp_pairs.jsonl", Family::JpPairs, "builtin:ja"),
    ];
    let lm = MockLm::new(0);
    for (file, family, lexicon) in emitted {
        let mut config = RunConfig::new(fixture(file), family, Vec::new(), ProviderSpec::mock());
        config.lexicon = lexicon.into();
        let manifest = export_sentences(&config, lm_id(&lm)).map_err(|e| e.to_string())?;
        let scores: Vec<_> = manifest.lines.iter().map(|l| lm.score_text(&l.text)).collect();
        let mut buf = Vec::new();
        write_logprob_file(&mut buf, &scores).unwrap();
        let back = read_logprob_file(buf.as_slice(), Path::new(file)).map_err(|e| e.to_string())?;
        check(back == scores, || format!("{file}: emitted records changed on re-read"))?;
        for (line, score) in manifest.lines.iter().zip(&back) {
            check(line.sentence_id == score.sentence_id, || format!("{file}: manifest id mismatch"))?;
        }
        records += back.len();
        files += 1;
    }

    let mut http = 0;
    for entry in std::fs::read_dir(fixture("http")).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let status: u16 = name.split('_').next().unwrap().parse().unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        validate_http_response(status, &body).map_err(|e| format!("{name}: {e}"))?;
        http += 1;
    }

    let md = std::fs::read_to_string(fixture("golden/genderlex12.md")).unwrap();
    let header = md.lines().find(|l| l.starts_with("| context |")).unwrap();
    check(header.starts_with("| context | M | W | KL | WEAT |"), || format!("header {header:?}"))?;
    let width = header.matches('|').count();
    let table_rows: Vec<&str> = md
        .lines()
        .skip_while(|l| *l != header)
        .take_while(|l| l.starts_with('|'))
        .collect();
    check(table_rows.iter().all(|l| l.matches('|').count() == width), || "ragged markdown table".into())?;

    let mut report: BiasReport = serde_json::from_str(&std::fs::read_to_string(fixture("golden/genderlex12.json")).unwrap()).unwrap();
    report.rows.retain(|r| r.context == "occupation");
    report.rows[0].human_agreement = None;
    let one = to_markdown(&report);
    let lines: Vec<&str> = one.lines().filter(|l| l.starts_with('|')).collect();
    check(lines.len() == 3 && lines[0] == "| context | M | W | KL | WEAT |", || format!("one-row table {lines:?}"))?;
    check(lines[2].starts_with("| occupation | 0.") && lines[2].matches('|').count() == 6, || lines[2].to_string())?;
    Ok(format!(
        "{records} logprob records in {files} files valid, {http} HTTP fixtures valid, markdown `| context | M | W | KL | WEAT |`"
    ))
}

fn lm_id(lm: &MockLm) -> &str {
    use clozebias_core::lm::LogprobProvider;
    lm.model_id()
}

fn main() {
    let criteria: [Criterion; 6] = [
        ("cgs-unit-suite", Duration::from_secs(1), cgs_suite),
        ("metric-identities", Duration::from_secs(5), metric_identities),
        ("oracle-equivalence", Duration::from_secs(10), oracle_equivalence),
        ("pair-symmetry", Duration::from_secs(10), pair_symmetry),
        ("corpus-round-trip", Duration::from_secs(10), corpus_round_trip),
        ("format-conformance", Duration::from_secs(10), format_conformance),
    ];
    let mut failed = 0;
    for (name, budget, f) in criteria {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > budget => Err(format!("{detail}; took {elapsed:?}, budget {budget:?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS {name:<20} {detail} [{:.0} ms]", elapsed.as_secs_f64() * 1e3),
            Err(why) => {
                failed += 1;
                println!("FAIL {name:<20} {why} [{:.0} ms]", elapsed.as_secs_f64() * 1e3);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
