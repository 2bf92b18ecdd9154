//! Plain-text matrix format for tabular instances.
//!
//! ```text
//! tabular-mdp 1
//! states 2
//! adversary_actions 2
//! victim_actions 1
//! third_actions
//! paths 1
//! gamma 0.9
//! transitions
//! <one row of n_states probabilities per (state, joint action)>
//! rewards
//! <one row of n_paths values per (state, joint action)>
//! policy victim 0
//! <one row per state>
//! end
//! ```
//!
//! Numbers use the shortest decimal form that parses back to the same
//! `f64`, so a round trip is exact.

use std::path::Path;

use crate::error::{Error, Result};
use crate::manifest::write_atomic;

use super::TabularMdp;

const HEADER: &str = "tabular-mdp 1";

fn row(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn to_text(mdp: &TabularMdp) -> String {
    let sizes = |v: &[usize]| {
        v.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    out.push_str(&format!("states {}\n", mdp.n_states));
    out.push_str(format!("adversary_actions {}", sizes(&mdp.adversary_actions)).trim_end());
    out.push('\n');
    out.push_str(format!("victim_actions {}", sizes(&mdp.victim_actions)).trim_end());
    out.push('\n');
    out.push_str(format!("third_actions {}", sizes(&mdp.third_actions)).trim_end());
    out.push('\n');
    out.push_str(&format!("paths {}\n", mdp.n_paths));
    out.push_str(&format!("gamma {}\n", mdp.gamma));
    out.push_str("transitions\n");
    for r in mdp.transitions.iter().flatten() {
        out.push_str(&row(r));
        out.push('\n');
    }
    out.push_str("rewards\n");
    for r in mdp.rewards.iter().flatten() {
        out.push_str(&row(r));
        out.push('\n');
    }
    for (label, pols) in [
        ("victim", &mdp.victim_policies),
        ("third", &mdp.third_policies),
    ] {
        for (k, pol) in pols.iter().enumerate() {
            out.push_str(&format!("policy {label} {k}\n"));
            for r in pol {
                out.push_str(&row(r));
                out.push('\n');
            }
        }
    }
    out.push_str("end\n");
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str)> {
        for (i, l) in self.inner.by_ref() {
            let l = l.trim();
            if !l.is_empty() && !l.starts_with('#') {
                return Ok((i + 1, l));
            }
        }
        Err(Error::Parse {
            line: 0,
            detail: "unexpected end of input".into(),
        })
    }

    fn keyword(&mut self, key: &str) -> Result<(usize, Vec<&'a str>)> {
        let (n, l) = self.next()?;
        let mut parts = l.split_whitespace();
        if parts.next() != Some(key) {
            return Err(Error::Parse {
                line: n,
                detail: format!("expected `{key}`"),
            });
        }
        Ok((n, parts.collect()))
    }

    fn numbers<T: std::str::FromStr>(&mut self, expected: usize) -> Result<Vec<T>> {
        let (n, l) = self.next()?;
        let vals: Vec<T> = l
            .split_whitespace()
            .map(|t| {
                t.parse().map_err(|_| Error::Parse {
                    line: n,
                    detail: format!("bad number `{t}`"),
                })
            })
            .collect::<Result<_>>()?;
        if vals.len() != expected {
            return Err(Error::Parse {
                line: n,
                detail: format!("expected {expected} values, found {}", vals.len()),
            });
        }
        Ok(vals)
    }
}

fn parse_list<T: std::str::FromStr>(line: usize, parts: &[&str]) -> Result<Vec<T>> {
    parts
        .iter()
        .map(|t| {
            t.parse().map_err(|_| Error::Parse {
                line,
                detail: format!("bad value `{t}`"),
            })
        })
        .collect()
}

fn single<T: std::str::FromStr>(line: usize, parts: &[&str]) -> Result<T> {
    match parts {
        [one] => parse_list(line, &[*one]).map(|mut v| v.remove(0)),
        _ => Err(Error::Parse {
            line,
            detail: "expected one value".into(),
        }),
    }
}

/// Parses and validates an instance.
pub fn from_text(text: &str) -> Result<TabularMdp> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (n, head) = lines.next()?;
    if head != HEADER {
        return Err(Error::Parse {
            line: n,
            detail: format!("expected `{HEADER}`"),
        });
    }
    let (n, p) = lines.keyword("states")?;
    let n_states: usize = single(n, &p)?;
    let (n, p) = lines.keyword("adversary_actions")?;
    let adversary_actions: Vec<usize> = parse_list(n, &p)?;
    let (n, p) = lines.keyword("victim_actions")?;
    let victim_actions: Vec<usize> = parse_list(n, &p)?;
    let (n, p) = lines.keyword("third_actions")?;
    let third_actions: Vec<usize> = parse_list(n, &p)?;
    let (n, p) = lines.keyword("paths")?;
    let n_paths: usize = single(n, &p)?;
    let (n, p) = lines.keyword("gamma")?;
    let gamma: f64 = single(n, &p)?;
    let nj: usize = adversary_actions
        .iter()
        .chain(&victim_actions)
        .chain(&third_actions)
        .product();
    lines.keyword("transitions")?;
    let mut transitions = Vec::with_capacity(n_states);
    for _ in 0..n_states {
        transitions.push(
            (0..nj)
                .map(|_| lines.numbers(n_states))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    lines.keyword("rewards")?;
    let mut rewards = Vec::with_capacity(n_states);
    for _ in 0..n_states {
        rewards.push(
            (0..nj)
                .map(|_| lines.numbers(n_paths))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let mut policies = Vec::new();
    for (label, acts) in [("victim", &victim_actions), ("third", &third_actions)] {
        let mut pols = Vec::new();
        for (k, &na) in acts.iter().enumerate() {
            let (n, p) = lines.keyword("policy")?;
            if p != [label, k.to_string().as_str()] {
                return Err(Error::Parse {
                    line: n,
                    detail: format!("expected `policy {label} {k}`"),
                });
            }
            pols.push(
                (0..n_states)
                    .map(|_| lines.numbers(na))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        policies.push(pols);
    }
    lines.keyword("end")?;
    let third_policies = policies.pop().unwrap_or_default();
    let victim_policies = policies.pop().unwrap_or_default();
    let mdp = TabularMdp {
        n_states,
        adversary_actions,
        victim_actions,
        third_actions,
        n_paths,
        gamma,
        transitions,
        rewards,
        victim_policies,
        third_policies,
    };
    mdp.validate()?;
    Ok(mdp)
}

pub fn save(mdp: &TabularMdp, path: &Path) -> Result<()> {
    write_atomic(path, to_text(mdp).as_bytes())
}

pub fn load(path: &Path) -> Result<TabularMdp> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::Dependency {
            missing: vec![path.to_path_buf()],
        },
        _ => Error::Io(e),
    })?;
    from_text(&text)
}
