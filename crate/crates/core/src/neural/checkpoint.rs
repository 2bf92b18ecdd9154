//! Text checkpoint container.
//!
//! ```text
//! nalab-checkpoint 1
//! meta <key> <value...>
//! tensor <name> <rank> <dims...>
//! <values as 16-digit hex bit patterns>
//! adam <name> <step> <lr> <beta1> <beta2> <epsilon> <buffers>
//! m <len> <values...>
//! v <len> <values...>
//! end
//! ```
//!
//! Reals are stored as the hex form of their IEEE-754 bits, so a
//! save/load round trip is bit exact.

use std::collections::BTreeMap;
use std::path::Path;

use super::adam::Adam;
use super::tensor::ParamTensor;
use crate::error::{Error, Result};

const MAGIC: &str = "nalab-checkpoint";
const VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<ParamTensor>,
    pub optimizers: Vec<(String, Adam)>,
}

fn hex(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn unhex(s: &str, line: usize) -> Result<f64> {
    u64::from_str_radix(s, 16)
        .map(f64::from_bits)
        .map_err(|_| Error::Parse {
            line,
            detail: format!("bad real `{s}`"),
        })
}

fn hex_list(values: &[f64]) -> String {
    values.iter().map(|v| hex(*v)).collect::<Vec<_>>().join(" ")
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    /// Looks up a tensor by name.
    pub fn tensor(&self, name: &str) -> Result<&ParamTensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Lookup(format!("checkpoint has no tensor `{name}`")))
    }

    /// All tensors whose name starts with `prefix`, in stored order.
    pub fn tensors_with_prefix(&self, prefix: &str) -> Vec<ParamTensor> {
        self.tensors
            .iter()
            .filter(|t| t.name.starts_with(prefix))
            .cloned()
            .collect()
    }

    pub fn optimizer(&self, name: &str) -> Option<&Adam> {
        self.optimizers
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, a)| a)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC} {VERSION}\n");
        for (k, v) in &self.meta {
            out.push_str(&format!("meta {k} {v}\n"));
        }
        for t in &self.tensors {
            let dims: Vec<String> = t.shape.iter().map(|d| d.to_string()).collect();
            out.push_str(&format!(
                "tensor {} {} {}\n",
                t.name,
                t.shape.len(),
                dims.join(" ")
            ));
            out.push_str(&hex_list(&t.values));
            out.push('\n');
        }
        for (name, a) in &self.optimizers {
            out.push_str(&format!(
                "adam {name} {} {} {} {} {} {}\n",
                a.step,
                hex(a.learning_rate),
                hex(a.beta1),
                hex(a.beta2),
                hex(a.epsilon),
                a.first_moment.len()
            ));
            for (m, v) in a.first_moment.iter().zip(&a.second_moment) {
                out.push_str(&format!("m {} {}\n", m.len(), hex_list(m)));
                out.push_str(&format!("v {} {}\n", v.len(), hex_list(v)));
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let perr = |line: usize, detail: String| Error::Parse { line, detail };
        let (n, header) = lines
            .next()
            .ok_or_else(|| perr(1, "empty checkpoint".into()))?;
        if header != format!("{MAGIC} {VERSION}") {
            return Err(perr(n, format!("unsupported header `{header}`")));
        }
        let mut ck = Checkpoint::new();
        let parse_usize = |s: Option<&str>, line: usize| -> Result<usize> {
            s.and_then(|v| v.parse().ok())
                .ok_or_else(|| perr(line, "expected an integer".into()))
        };
        let read_list = |body: &str, expect: usize, line: usize| -> Result<Vec<f64>> {
            let vals: Vec<f64> = body
                .split_whitespace()
                .map(|s| unhex(s, line))
                .collect::<Result<_>>()?;
            if vals.len() != expect {
                return Err(perr(
                    line,
                    format!("expected {expect} values, got {}", vals.len()),
                ));
            }
            Ok(vals)
        };
        let mut ended = false;
        while let Some((n, line)) = lines.next() {
            let mut parts = line.splitn(2, ' ');
            let tag = parts.next().unwrap_or("");
            let rest = parts.next().unwrap_or("");
            match tag {
                "meta" => {
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    ck.meta.insert(k.to_string(), v.to_string());
                }
                "tensor" => {
                    let mut f = rest.split_whitespace();
                    let name = f
                        .next()
                        .ok_or_else(|| perr(n, "tensor without name".into()))?;
                    let rank = parse_usize(f.next(), n)?;
                    let shape: Vec<usize> = (0..rank)
                        .map(|_| parse_usize(f.next(), n))
                        .collect::<Result<_>>()?;
                    let (vn, body) = lines
                        .next()
                        .ok_or_else(|| perr(n + 1, "missing tensor values".into()))?;
                    let values = read_list(body, shape.iter().product(), vn)?;
                    ck.tensors
                        .push(ParamTensor::from_values(name, &shape, values)?);
                }
                "adam" => {
                    let f: Vec<&str> = rest.split_whitespace().collect();
                    if f.len() != 7 {
                        return Err(perr(n, "malformed optimizer header".into()));
                    }
                    let step: u64 = f[1].parse().map_err(|_| perr(n, "bad step".into()))?;
                    let mut a = Adam::with_betas(
                        unhex(f[2], n)?,
                        unhex(f[3], n)?,
                        unhex(f[4], n)?,
                        unhex(f[5], n)?,
                    )?;
                    a.step = step;
                    let buffers = parse_usize(Some(f[6]), n)?;
                    for _ in 0..buffers {
                        for which in ["m", "v"] {
                            let (ln, l) = lines
                                .next()
                                .ok_or_else(|| perr(n, "missing moment line".into()))?;
                            let mut p = l.splitn(3, ' ');
                            if p.next() != Some(which) {
                                return Err(perr(ln, format!("expected `{which}` line")));
                            }
                            let len = parse_usize(p.next(), ln)?;
                            let vals = read_list(p.next().unwrap_or(""), len, ln)?;
                            if which == "m" {
                                a.first_moment.push(vals);
                            } else {
                                a.second_moment.push(vals);
                            }
                        }
                    }
                    ck.optimizers.push((f[0].to_string(), a));
                }
                "end" => {
                    ended = true;
                    break;
                }
                "" => {}
                other => return Err(perr(n, format!("unknown record `{other}`"))),
            }
        }
        if !ended {
            return Err(perr(
                text.lines().count(),
                "truncated checkpoint (no `end`)".into(),
            ));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::manifest::write_atomic(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Dependency {
                missing: vec![path.to_path_buf()],
            });
        }
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut ck = Checkpoint::new();
        ck.meta.insert("kind".into(), "victims".into());
        let t =
            ParamTensor::from_values("q0.w0", &[2, 2], vec![0.1, -0.0, f64::MIN_POSITIVE, 1e300])
                .unwrap();
        ck.tensors.push(t.clone());
        let mut a = Adam::new(1e-3);
        let mut p = t;
        p.grad = vec![0.3, 0.1, -0.2, 0.0];
        a.update([&mut p]).unwrap();
        ck.optimizers.push(("opt".into(), a));
        let text = ck.to_text();
        let back = Checkpoint::from_text(&text).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.tensors[0].values[1].to_bits(), (-0.0f64).to_bits());
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn truncated_is_parse_error() {
        let ck = Checkpoint::new();
        let text = ck.to_text().replace("end\n", "");
        assert!(matches!(
            Checkpoint::from_text(&text),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn missing_file_is_dependency_error() {
        let err = Checkpoint::load(Path::new("/nonexistent/ck.txt")).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
