#![allow(dead_code)]

use roundabout::phases::{consistent, PhaseId};
use roundabout::sim::{LogEntry, SignalEvent};
use roundabout::ControllerParams;

const ET_MAX: u32 = 15;

fn fail(e: &LogEntry, why: &str) -> Result<(), String> {
    Err(format!(
        "t={} {:?} {} {}: {why}",
        e.t, e.event, e.phase, e.duration
    ))
}

fn check_extension(e: &LogEntry, p: &ControllerParams) -> Result<(), String> {
    if f64::from(e.duration) <= p.extension_threshold || e.duration > ET_MAX {
        return fail(e, "extension outside (threshold, 15]");
    }
    Ok(())
}

/// Walks a log, handing each non-all-red transition to `step` together with
/// the phase before it and whether an all-red preceded it. Verifies that
/// every all-red lasts θ and is followed by the announced switch θ later.
fn walk(
    log: &[LogEntry],
    p: &ControllerParams,
    mut step: impl FnMut(&LogEntry, PhaseId, bool) -> Result<(), String>,
) -> Result<(), String> {
    let Some(first) = log.first() else {
        return Err("empty log".into());
    };
    if first.event != SignalEvent::Switch {
        return fail(first, "log must open with the initial phase");
    }
    let mut current = first.phase;
    let mut pending: Option<&LogEntry> = None;
    for e in &log[1..] {
        if let Some(ar) = pending.take() {
            if e.event != SignalEvent::Switch
                || e.phase != ar.phase
                || e.t != ar.t + u64::from(p.all_red)
            {
                return fail(e, "all-red not followed by its switch after exactly θ");
            }
            step(e, current, true)?;
            current = e.phase;
            continue;
        }
        match e.event {
            SignalEvent::AllRed => {
                if e.duration != p.all_red {
                    return fail(e, "all-red length differs from θ");
                }
                if consistent(current, e.phase) {
                    return fail(e, "all-red before a consistent switch");
                }
                pending = Some(e);
            }
            SignalEvent::Switch => {
                step(e, current, false)?;
                current = e.phase;
            }
            SignalEvent::Extend => {
                if e.phase != current {
                    return fail(e, "extension of a phase that is not running");
                }
                step(e, current, false)?;
            }
        }
    }
    Ok(())
}

/// FUZZY-MIX: extend, advance within the subset, or all-red into the other
/// subset's entrance phase.
pub fn check_mix_log(log: &[LogEntry], p: &ControllerParams) -> Result<(), String> {
    walk(log, p, |e, current, after_all_red| match e.event {
        SignalEvent::Extend => check_extension(e, p),
        SignalEvent::Switch if after_all_red => {
            if e.phase != current.subset().other().entrance() || e.duration != p.initial_duration {
                return fail(
                    e,
                    "subset switch must enter the other subset's entrance phase for Θ",
                );
            }
            Ok(())
        }
        SignalEvent::Switch => {
            if e.phase != current.next_in_subset() || e.duration != p.initial_duration {
                return fail(
                    e,
                    "inner switch must go to the next phase of the subset for Θ",
                );
            }
            Ok(())
        }
        SignalEvent::AllRed => unreachable!(),
    })
}

/// FUZZY-TURN: the phase circle, no all-red.
pub fn check_turn_log(log: &[LogEntry], p: &ControllerParams) -> Result<(), String> {
    if let Some(e) = log.iter().find(|e| e.event == SignalEvent::AllRed) {
        return fail(e, "FUZZY-TURN never uses all-red");
    }
    walk(log, p, |e, current, _| match e.event {
        SignalEvent::Extend => check_extension(e, p),
        _ if e.phase != current.next_in_circle() => fail(e, "switch off the phase circle"),
        _ => Ok(()),
    })
}

/// FUZZY-JUMP: every decision lasts Δ; inconsistent switches carry all-red.
pub fn check_jump_log(log: &[LogEntry], p: &ControllerParams) -> Result<(), String> {
    walk(log, p, |e, current, after_all_red| {
        if e.duration != p.urgency_interval {
            return fail(e, "decisions last Δ");
        }
        if e.event == SignalEvent::Switch && !after_all_red && !consistent(current, e.phase) {
            return fail(e, "inconsistent switch without all-red");
        }
        Ok(())
    })
}

/// Lengths of each green interval, from its start to the next transition
/// (or `horizon`).
pub fn green_lengths(log: &[LogEntry], horizon: u64) -> Vec<(PhaseId, u64)> {
    let mut out = Vec::new();
    let mut start: Option<(PhaseId, u64)> = None;
    for e in log {
        match e.event {
            SignalEvent::Switch => {
                if let Some((p, t0)) = start {
                    out.push((p, e.t - t0));
                }
                start = Some((e.phase, e.t));
            }
            SignalEvent::AllRed => {
                if let Some((p, t0)) = start.take() {
                    out.push((p, e.t - t0));
                }
            }
            SignalEvent::Extend => {}
        }
    }
    if let Some((p, t0)) = start {
        out.push((p, horizon - t0));
    }
    out
}

// Independent closed forms of the hand-crafted terms.

pub fn falling(x: f64, a: f64, b: f64) -> f64 {
    if x <= a {
        1.0
    } else if x >= b {
        0.0
    } else {
        (b - x) / (b - a)
    }
}

pub fn rising(x: f64, a: f64, b: f64) -> f64 {
    1.0 - falling(x, a, b)
}

pub fn triangle(x: f64, a: f64, m: f64, b: f64) -> f64 {
    if x <= a || x >= b {
        0.0
    } else if x <= m {
        (x - a) / (m - a)
    } else {
        (b - x) / (b - m)
    }
}

pub fn ql_grades(x: f64) -> [f64; 3] {
    [
        falling(x, 0.0, 8.0),
        triangle(x, 4.0, 10.0, 16.0),
        rising(x, 12.0, 20.0),
    ]
}

pub fn wt_grades(x: f64) -> [f64; 3] {
    ql_grades(x / 5.0)
}

const ET_RULES: [(&str, &str, &str); 9] = [
    ("short", "short", "short"),
    ("short", "medium", "short"),
    ("short", "long", "short"),
    ("medium", "short", "short"),
    ("medium", "medium", "long"),
    ("medium", "long", "long"),
    ("long", "short", "long"),
    ("long", "medium", "long"),
    ("long", "long", "long"),
];

const UD_RULES: [(&str, &str, &str); 9] = [
    ("short", "short", "low"),
    ("short", "medium", "low"),
    ("short", "long", "medium"),
    ("medium", "short", "low"),
    ("medium", "medium", "medium"),
    ("medium", "long", "high"),
    ("long", "short", "medium"),
    ("long", "medium", "high"),
    ("long", "long", "high"),
];

const ET_CENTROIDS: [f64; 2] = [2.5, 12.5];
const UD_CENTROIDS: [f64; 3] = [0.4 / 3.0, 0.5, 1.0 - 0.4 / 3.0];

fn index(names: &[&str], n: &str) -> usize {
    names.iter().position(|m| *m == n).unwrap()
}

/// Brute-force Mamdani: all nine rules, min then max, weighted mean.
fn brute(
    rules: &[(&str, &str, &str); 9],
    out_names: &[&str],
    centroids: &[f64],
    ql: f64,
    wt: f64,
) -> f64 {
    let names = ["short", "medium", "long"];
    let (g1, g2) = (
        ql_grades(ql.clamp(0.0, 20.0)),
        wt_grades(wt.clamp(0.0, 100.0)),
    );
    let mut out = vec![0.0f64; out_names.len()];
    for &(a, b, c) in rules {
        let s = g1[index(&names, a)].min(g2[index(&names, b)]);
        let k = index(out_names, c);
        out[k] = out[k].max(s);
    }
    let total: f64 = out.iter().sum();
    if total == 0.0 {
        return centroids.iter().sum::<f64>() / centroids.len() as f64;
    }
    out.iter().zip(centroids).map(|(o, c)| o * c).sum::<f64>() / total
}

pub fn brute_et(ql: f64, wt: f64) -> f64 {
    brute(&ET_RULES, &["short", "long"], &ET_CENTROIDS, ql, wt)
}

pub fn brute_ud(ql: f64, wt: f64) -> f64 {
    brute(&UD_RULES, &["low", "medium", "high"], &UD_CENTROIDS, ql, wt)
}
