#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use evokd::data::{Dataset, LabeledSample, TaskSpec};
use evokd::teacher::{CallKind, FaultSpec, Fixtures};

pub const POSITIVE: [&str; 6] = ["great", "lovely", "excellent", "superb", "fantastic", "pleasant"];
pub const NEGATIVE: [&str; 6] = ["awful", "broken", "terrible", "useless", "dreadful", "faulty"];
pub const THINGS: [&str; 5] = ["battery", "screen", "charger", "case", "speaker"];

pub fn sentiment() -> Arc<TaskSpec> {
    Arc::new(TaskSpec::new("sentiment", "Decide whether a product review is positive or negative.", ["positive", "negative"]).unwrap())
}

pub fn seed_data(task: &Arc<TaskSpec>) -> Dataset {
    let samples = vec![
        LabeledSample::seed("great battery and a lovely screen", "positive").unwrap(),
        LabeledSample::seed("the charger arrived broken", "negative").unwrap(),
        LabeledSample::seed("excellent speaker for the price", "positive").unwrap(),
        LabeledSample::seed("awful case, fell apart in a week", "negative").unwrap(),
    ];
    Dataset::new(task.clone(), samples).unwrap()
}

/// Review text for reply `round`, item `i`; even items are positive.
pub fn review(round: usize, i: usize) -> (String, &'static str) {
    let thing = THINGS[(round + i) % THINGS.len()];
    if i.is_multiple_of(2) {
        (format!("{} {thing} model r{round}x{i}", POSITIVE[(round * 3 + i) % 6]), "positive")
    } else {
        (format!("{} {thing} model r{round}x{i}", NEGATIVE[(round * 5 + i) % 6]), "negative")
    }
}

/// Weakness, generation and labeling replies for `rounds` rounds of `b` texts.
pub fn round_replies(round: usize, b: usize) -> Vec<(CallKind, String)> {
    let items: Vec<(String, &str)> = (0..b).map(|i| review(round, i)).collect();
    let generate = items
        .iter()
        .enumerate()
        .map(|(i, (t, _))| format!("{}. {t} || mixes a product noun with a strong adjective", i + 1))
        .collect::<Vec<_>>()
        .join("\n");
    let label = items
        .iter()
        .enumerate()
        .map(|(i, (_, l))| format!("{}. {l}", i + 1))
        .collect::<Vec<_>>()
        .join("\n");
    vec![
        (
            CallKind::Weakness,
            format!("The student confuses short reviews that name a part, round {round}."),
        ),
        (CallKind::Generate, generate),
        (CallKind::Label, label),
    ]
}

/// A fixture directory good for `rounds` chat rounds with batch size `b`.
pub fn write_run_fixtures(dir: &Path, rounds: usize, b: usize) -> PathBuf {
    let replies: Vec<(CallKind, String)> = (1..=rounds).flat_map(|r| round_replies(r, b)).collect();
    let borrowed: Vec<(CallKind, &str)> = replies.iter().map(|(k, s)| (*k, s.as_str())).collect();
    Fixtures::write(dir, &borrowed).unwrap()
}

pub fn write_fixtures_with(
    dir: &Path,
    replies: &[(CallKind, String)],
    faults: Vec<FaultSpec>,
    api_key: Option<&str>,
) -> PathBuf {
    let borrowed: Vec<(CallKind, &str)> = replies.iter().map(|(k, s)| (*k, s.as_str())).collect();
    Fixtures::write_with(dir, &borrowed, faults, api_key.map(str::to_string)).unwrap()
}
