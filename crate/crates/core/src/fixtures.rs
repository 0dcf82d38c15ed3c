//! Synthetic corpora with planted effects.
//!
//! The tree written by [`build_fixtures`] is:
//!
//! ```text
//! transcripts.jsonl            aha/no-aha responses, both tasks, five difficulties
//! sets.json                    default token sets
//! latent/increasing/           layer_XX.bin + labels.json, separation grows with layer
//! latent/decreasing/           same, separation shrinks with layer
//! collapse/transcripts.jsonl   detector positives and negatives
//! collapse/labels.json         ground truth per transcript id
//! expected.json                the planted schedules
//! ```

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::latent::{write_activation_payload, ActivationTensor, Label, Sidecar};
use crate::rasm::TokenSets;
use crate::transcript::{write_transcripts, Role, Task, TokenEvent, Transcript};

pub const DIFFICULTIES: [u32; 5] = [3, 4, 5, 7, 10];
pub const AHA_MODEL: &str = "aha-fixture";
pub const NOAHA_MODEL: &str = "noaha-fixture";
pub const TRANSCRIPTS_PER_GROUP: usize = 4;
pub const SENTENCES_PER_TRANSCRIPT: usize = 10;

pub const LATENT_LAYERS: u16 = 12;
pub const LATENT_DIM: usize = 16;
pub const LATENT_PER_CLUSTER: usize = 24;
pub const LATENT_DIFFICULTIES: [u32; 3] = [3, 5, 7];

pub const COLLAPSE_POSITIVES: usize = 30;
pub const COLLAPSE_CLEAN: usize = 30;

const A_POOL: [&str; 5] = ["Wait", "Hmm", "Alternatively", "Okay", "Maybe"];
const R_POOL: [&str; 5] = ["So", "First", "Therefore", "Next", "Thus"];
const OTHER_POOL: [&str; 4] = ["The", "In", "Both", "Now"];

const WORDS: [&str; 40] = [
    "we", "check", "the", "case", "where", "each", "person", "is", "a", "knight", "knave", "number",
    "sum", "product", "value", "target", "statement", "true", "false", "then", "it", "follows", "that",
    "must", "be", "claim", "holds", "option", "result", "equals", "left", "right", "side", "term",
    "remains", "valid", "both", "only", "one", "answer",
];

const CJK: [char; 30] = [
    '明', '天', '我', '们', '再', '检', '查', '这', '个', '问', '题', '答', '案', '是', '骑', '士',
    '无', '赖', '数', '字', '目', '标', '结', '果', '正', '确', '错', '误', '因', '此',
];

const EMOJI: [char; 8] = ['😊', '🤔', '🎉', '✨', '🔥', '👍', '💡', '🙂'];

/// Anthropomorphic and reasoning alternative mass at sentence beginnings.
pub fn rasm_schedule(role: Role, level: usize) -> (f64, f64) {
    let l = level as f64;
    match role {
        Role::Aha => (0.10 + 0.18 * l, 0.80 - 0.18 * l),
        Role::NoAha => (0.04 + 0.04 * l, 0.85 - 0.04 * l),
    }
}

/// Cluster separation along the difficulty axis for each layer.
pub fn latent_schedule(trend: Trend, layer: u16) -> f64 {
    let step = match trend {
        Trend::Increasing => layer,
        Trend::Decreasing => LATENT_LAYERS - 1 - layer,
    };
    0.3 + 0.25 * step as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trend {
    Increasing,
    Decreasing,
}

impl Trend {
    pub fn dir_name(self) -> &'static str {
        match self {
            Trend::Increasing => "increasing",
            Trend::Decreasing => "decreasing",
        }
    }
}

fn prob(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

fn word_tokens(rng: &mut ChaCha8Rng, n: usize, out: &mut Vec<TokenEvent>) {
    for _ in 0..n {
        let w = WORDS.choose(rng).unwrap();
        let p = prob(rng, 0.4, 0.99);
        out.push(TokenEvent::new(format!(" {w}"), p.ln()));
    }
}

fn rasm_sentence(rng: &mut ChaCha8Rng, role: Role, level: usize, first: bool, out: &mut Vec<TokenEvent>) {
    let (base_a, base_r) = rasm_schedule(role, level);
    let jitter = rng.gen_range(-0.02..0.02);
    let (pa, pr) = (base_a + jitter, base_r - jitter);
    let other = (1.0 - pa - pr) * 0.5;
    let lead = if first { "" } else { " " };
    let a: Vec<&&str> = A_POOL.choose_multiple(rng, 2).collect();
    let r: Vec<&&str> = R_POOL.choose_multiple(rng, 2).collect();
    let o: Vec<&&str> = OTHER_POOL.choose_multiple(rng, 2).collect();
    let alts = [(format!("{lead}{}", a[0]), pa * 0.6),
        (format!("{lead}{}", a[1]), pa * 0.4),
        (format!("{lead}{}", r[0]), pr * 0.6),
        (format!("{lead}{}", r[1]), pr * 0.4),
        (format!("{lead}{}", o[0]), other * 0.7),
        (format!("{lead}{}", o[1]), other * 0.3)];
    let &(ref text, p) = alts.choose_weighted(rng, |(_, p)| *p).unwrap();
    let event = TokenEvent::new(text.clone(), p.ln())
        .with_alternatives(alts.iter().map(|(t, p)| (t.clone(), p.ln())).collect());
    out.push(event);
    let n = rng.gen_range(4..10);
    word_tokens(rng, n, out);
    out.push(TokenEvent::new(".", prob(rng, 0.8, 1.0).ln()));
}

fn rasm_transcript(rng: &mut ChaCha8Rng, role: Role, task: Task, level: usize, index: usize) -> Transcript {
    let model = match role {
        Role::Aha => AHA_MODEL,
        Role::NoAha => NOAHA_MODEL,
    };
    let difficulty = DIFFICULTIES[level];
    let mut tokens = Vec::new();
    let body = SENTENCES_PER_TRANSCRIPT - 2;
    if role == Role::Aha {
        tokens.push(TokenEvent::new("<think>", 0.0));
        tokens.push(TokenEvent::new("\n", prob(rng, 0.9, 1.0).ln()));
    }
    for s in 0..body {
        rasm_sentence(rng, role, level, s == 0, &mut tokens);
    }
    if role == Role::Aha {
        tokens.push(TokenEvent::new("\n", prob(rng, 0.9, 1.0).ln()));
        tokens.push(TokenEvent::new("</think>", prob(rng, 0.9, 1.0).ln()));
    }
    tokens.push(TokenEvent::new("\n\n", prob(rng, 0.9, 1.0).ln()));
    for s in 0..2 {
        rasm_sentence(rng, role, level, s == 0, &mut tokens);
    }
    if role == Role::NoAha {
        for t in ["\n\n", "**", "Final", " Answer", "**"] {
            tokens.push(TokenEvent::new(t, prob(rng, 0.9, 1.0).ln()));
        }
    }
    let id = format!("{model}-{task}-n{difficulty}-{index}");
    Transcript::from_tokens(id, task, difficulty, model, role, tokens).expect("fixture tokens are valid")
}

/// The aha/no-aha corpus with planted RASM schedules.
pub fn rasm_corpus(seed: u64) -> Vec<Transcript> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for role in [Role::Aha, Role::NoAha] {
        for task in [Task::Kk, Task::Countdown] {
            for level in 0..DIFFICULTIES.len() {
                for i in 0..TRANSCRIPTS_PER_GROUP {
                    out.push(rasm_transcript(&mut rng, role, task, level, i));
                }
            }
        }
    }
    out
}

/// Layers whose difficulty clusters separate along one axis according to
/// [`latent_schedule`], under a dominant nuisance direction. The noise draw
/// is shared by all layers so only the separation changes.
pub fn latent_layers(seed: u64, trend: Trend) -> Vec<ActivationTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut labels = Vec::new();
    for task in ["kk", "countdown"] {
        for &d in &LATENT_DIFFICULTIES {
            for _ in 0..LATENT_PER_CLUSTER {
                labels.push(Label { task: task.into(), difficulty: d });
            }
        }
    }
    let noise: Vec<f64> = (0..labels.len() * LATENT_DIM).map(|_| normal.sample(&mut rng)).collect();
    (0..LATENT_LAYERS)
        .map(|layer| {
            let sep = latent_schedule(trend, layer);
            let mut data = Vec::with_capacity(noise.len());
            for (i, l) in labels.iter().enumerate() {
                let level = LATENT_DIFFICULTIES.iter().position(|&d| d == l.difficulty).unwrap() as f64;
                for j in 0..LATENT_DIM {
                    let z = noise[i * LATENT_DIM + j];
                    let v = match j {
                        0 => 10.0 * z,
                        1 => sep * level + 0.5 * z,
                        _ => 0.1 * z,
                    };
                    data.push(v as f32);
                }
            }
            ActivationTensor {
                model: Some(format!("fixture-{}", trend.dir_name())),
                layer,
                rows: labels.len(),
                dim: LATENT_DIM,
                data,
                labels: labels.clone(),
            }
        })
        .collect()
}

/// Ground truth for one collapse-fixture transcript.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CollapseLabels {
    pub mixing: bool,
    pub token_rep: bool,
    pub path_rep: bool,
}

struct Builder<'a> {
    rng: &'a mut ChaCha8Rng,
    tokens: Vec<TokenEvent>,
}

impl Builder<'_> {
    fn push(&mut self, text: impl Into<String>) {
        let p = prob(self.rng, 0.3, 0.99);
        self.tokens.push(TokenEvent::new(text, p.ln()));
    }

    fn sentence(&mut self) {
        let first = *["Then", "Next", "So", "Now", "Here"].choose(self.rng).unwrap();
        let lead = if self.tokens.is_empty() { "" } else { " " };
        self.push(format!("{lead}{first}"));
        for _ in 0..self.rng.gen_range(6..11) {
            let w = *WORDS.choose(self.rng).unwrap();
            self.push(format!(" {w}"));
        }
        self.push(".");
    }

    fn sentences(&mut self, n: usize) {
        for _ in 0..n {
            self.sentence();
        }
    }

    fn burst(&mut self, pool: &[char], len: usize) {
        self.push(" ");
        let mut left = len;
        while left > 0 {
            let k = self.rng.gen_range(1..=2).min(left);
            let s: String = (0..k).map(|_| *pool.choose(self.rng).unwrap()).collect();
            self.push(s);
            left -= k;
        }
    }

    fn fixed(&mut self, words: &str) {
        let lead = if self.tokens.is_empty() { "" } else { " " };
        for (i, w) in words.split(' ').enumerate() {
            self.push(if i == 0 { format!("{lead}{w}") } else { format!(" {w}") });
        }
        self.push(".");
    }
}

const REPEATED: [&str; 6] = [
    "Let me re-check the case where Zoey is a knight",
    "Wait I should verify the second statement again",
    "Let me recompute the sum of the first two numbers",
    "Hmm maybe the product of the remaining terms works",
    "So we go back and test the assumption about David",
    "Let me try subtracting the smaller number instead",
];

const LOOPS: [&[&str]; 6] = [
    &[" tomorrow", ","],
    &[" check"],
    &[" and", " then"],
    &[" 1", " +", " 2", " ="],
    &[" wait"],
    &[" so", " we", " have"],
];

fn collapse_case(rng: &mut ChaCha8Rng, kind: &str, i: usize) -> Vec<TokenEvent> {
    let mut b = Builder { rng, tokens: Vec::new() };
    match kind {
        "mixing" => {
            b.sentences(2);
            let len = b.rng.gen_range(48..80);
            let pool: &[char] = if i % 3 == 2 { &EMOJI } else { &CJK };
            b.burst(pool, len);
            b.sentences(2);
        }
        "token_rep" => {
            b.sentences(3);
            let block = LOOPS[i % LOOPS.len()];
            let repeats = b.rng.gen_range(12..31);
            for _ in 0..repeats {
                for t in block {
                    b.push(*t);
                }
            }
        }
        "path_rep" => {
            let s = REPEATED[i % REPEATED.len()];
            let copies = b.rng.gen_range(5..9);
            b.sentence();
            for _ in 0..copies {
                b.fixed(s);
                b.sentence();
            }
        }
        "near_mixing" => {
            b.push("Zoë");
            b.push(" is");
            b.push(" naïve");
            b.push(".");
            b.sentences(3);
            b.burst(&CJK, 6);
            b.sentences(3);
        }
        "near_token_rep" => {
            b.sentences(3);
            let block = LOOPS[i % LOOPS.len()];
            for _ in 0..8 {
                for t in block {
                    b.push(*t);
                }
            }
            b.sentence();
        }
        "near_path_rep" => {
            let s = REPEATED[i % REPEATED.len()];
            b.sentence();
            for _ in 0..4 {
                b.fixed(s);
                b.sentence();
            }
        }
        _ => {
            let n = b.rng.gen_range(4..9);
            b.sentences(n);
        }
    }
    b.tokens
}

/// Labeled detector positives and negatives.
pub fn collapse_corpus(seed: u64) -> (Vec<Transcript>, BTreeMap<String, CollapseLabels>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = Vec::new();
    let mut labels = BTreeMap::new();
    let kinds: [(&str, usize, CollapseLabels); 7] = [
        ("mixing", COLLAPSE_POSITIVES, CollapseLabels { mixing: true, ..Default::default() }),
        ("token_rep", COLLAPSE_POSITIVES, CollapseLabels { token_rep: true, ..Default::default() }),
        ("path_rep", COLLAPSE_POSITIVES, CollapseLabels { path_rep: true, ..Default::default() }),
        ("clean", COLLAPSE_CLEAN, CollapseLabels::default()),
        ("near_mixing", 10, CollapseLabels::default()),
        ("near_token_rep", 10, CollapseLabels::default()),
        ("near_path_rep", 10, CollapseLabels::default()),
    ];
    for (kind, count, label) in kinds {
        for i in 0..count {
            let tokens = collapse_case(&mut rng, kind, i);
            let id = format!("{kind}-{i:02}");
            let difficulty = 3 + (i % 8) as u32;
            let t = Transcript::from_tokens(&id, Task::Kk, difficulty, "collapse-fixture", Role::Aha, tokens)
                .expect("fixture tokens are valid");
            corpus.push(t);
            labels.insert(id, label);
        }
    }
    (corpus, labels)
}

fn expected(seed: u64) -> serde_json::Value {
    let schedule = |role| -> Vec<[f64; 2]> {
        (0..DIFFICULTIES.len()).map(|l| { let (a, r) = rasm_schedule(role, l); [a, r] }).collect()
    };
    let latent = |trend: Trend, sign: i32| {
        json!({
            "layers": LATENT_LAYERS,
            "dim": LATENT_DIM,
            "per_cluster": LATENT_PER_CLUSTER,
            "difficulties": LATENT_DIFFICULTIES,
            "separation": (0..LATENT_LAYERS).map(|l| latent_schedule(trend, l)).collect::<Vec<_>>(),
            "silhouette_trend_sign": sign,
        })
    };
    json!({
        "seed": seed,
        "rasm": {
            "difficulties": DIFFICULTIES,
            "models": { AHA_MODEL: "aha", NOAHA_MODEL: "no-aha" },
            "mass_schedule": { AHA_MODEL: schedule(Role::Aha), NOAHA_MODEL: schedule(Role::NoAha) },
            "mean_rasm_trend": "strictly_increasing",
        },
        "latent": {
            "increasing": latent(Trend::Increasing, 1),
            "decreasing": latent(Trend::Decreasing, -1),
        },
        "collapse": {
            "positives_per_detector": COLLAPSE_POSITIVES,
            "clean": COLLAPSE_CLEAN,
            "near_misses_per_detector": 10,
        },
    })
}

fn write_file(path: &Path, bytes: &[u8], written: &mut Vec<PathBuf>) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(bytes)?;
    written.push(path.to_path_buf());
    Ok(())
}

fn pretty(v: &impl Serialize) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("serializable");
    s.push(b'\n');
    s
}

/// Writes the full fixture tree under `out`, returning the files written.
/// Output is byte-identical for a given seed.
pub fn build_fixtures(seed: u64, out: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut written = Vec::new();

    let mut buf = Vec::new();
    write_transcripts(&mut buf, &rasm_corpus(seed))?;
    write_file(&out.join("transcripts.jsonl"), &buf, &mut written)?;

    write_file(&out.join("sets.json"), &pretty(&TokenSets::default().to_json()), &mut written)?;

    for (offset, trend) in [(1, Trend::Increasing), (2, Trend::Decreasing)] {
        let dir = out.join("latent").join(trend.dir_name());
        let layers = latent_layers(seed.wrapping_add(offset), trend);
        let side = Sidecar { model: layers[0].model.clone(), labels: layers[0].labels.clone() };
        write_file(&dir.join("labels.json"), &pretty(&side), &mut written)?;
        for t in &layers {
            let mut buf = Vec::new();
            write_activation_payload(&mut buf, t)?;
            write_file(&dir.join(format!("layer_{:02}.bin", t.layer)), &buf, &mut written)?;
        }
    }

    let (corpus, labels) = collapse_corpus(seed.wrapping_add(3));
    let mut buf = Vec::new();
    write_transcripts(&mut buf, &corpus)?;
    write_file(&out.join("collapse").join("transcripts.jsonl"), &buf, &mut written)?;
    write_file(&out.join("collapse").join("labels.json"), &pretty(&labels), &mut written)?;

    write_file(&out.join("expected.json"), &pretty(&expected(seed)), &mut written)?;
    Ok(written)
}
