//! Plain-text value model files.
//!
//! One `key values...` pair per line, `#` starts a comment. Every file opens
//! with `kind ols|svr|nn`. Reals are written with 17 significant digits,
//! which reproduces each `f64` bit for bit.
//!
//! ```text
//! kind nn
//! shift -1.2500000000000000e1
//! dropout 2.0000000000000001e-1
//! input_mean ...
//! input_scale ...
//! layer 5 10
//! weights ...
//! bias ...
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use snes_core::regress::nn::Dense;
use snes_core::regress::{InputScaling, LabelShift, LinearModel, NnModel, SvrModel, N_FEATURES};
use snes_core::ValueModel;

use crate::error::{Error, Result};

fn push_line(out: &mut String, key: &str, values: &[f64]) {
    out.push_str(key);
    for v in values {
        write!(out, " {v:.16e}").unwrap();
    }
    out.push('\n');
}

pub fn model_to_string(model: &ValueModel) -> String {
    let mut out = String::new();
    match model {
        ValueModel::Ols(m) => {
            out.push_str("kind ols\n");
            push_line(&mut out, "intercept", &[m.intercept]);
            push_line(&mut out, "coef", &m.coef);
        }
        ValueModel::Svr(m) => {
            out.push_str("kind svr\n");
            push_line(&mut out, "bias", &[m.bias]);
            push_line(&mut out, "weights", &m.weights);
        }
        ValueModel::Nn(m) => {
            out.push_str("kind nn\n");
            push_line(&mut out, "shift", &[m.shift.offset]);
            push_line(&mut out, "dropout", &[m.dropout]);
            push_line(&mut out, "input_mean", &m.inputs.mean);
            push_line(&mut out, "input_scale", &m.inputs.scale);
            for layer in &m.layers {
                writeln!(out, "layer {} {}", layer.inputs, layer.outputs).unwrap();
                push_line(&mut out, "weights", &layer.weights);
                push_line(&mut out, "bias", &layer.bias);
            }
        }
    }
    out
}

struct Lines<'a> {
    items: Vec<(usize, &'a str, Vec<&'a str>)>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let items = text
            .lines()
            .enumerate()
            .filter_map(|(i, l)| {
                let l = l.split('#').next().unwrap_or("").trim();
                let mut parts = l.split_whitespace();
                let key = parts.next()?;
                Some((i + 1, key, parts.collect()))
            })
            .collect();
        Lines { items, pos: 0 }
    }

    fn next(&mut self, key: &str) -> Result<(usize, Vec<&'a str>), String> {
        let (line, k, vals) = self.items.get(self.pos).ok_or_else(|| format!("missing '{key}'"))?;
        if *k != key {
            return Err(format!("line {line}: expected '{key}', found '{k}'"));
        }
        self.pos += 1;
        Ok((*line, vals.clone()))
    }

    fn reals(&mut self, key: &str, n: usize) -> Result<Vec<f64>, String> {
        let (line, vals) = self.next(key)?;
        if vals.len() != n {
            return Err(format!("line {line}: '{key}' needs {n} values, found {}", vals.len()));
        }
        vals.iter()
            .map(|v| {
                v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| format!("line {line}: bad number '{v}'"))
            })
            .collect()
    }

    fn real(&mut self, key: &str) -> Result<f64, String> {
        Ok(self.reals(key, 1)?[0])
    }

    fn array(&mut self, key: &str) -> Result<[f64; N_FEATURES], String> {
        Ok(self.reals(key, N_FEATURES)?.try_into().unwrap())
    }

    fn done(&self) -> bool {
        self.pos == self.items.len()
    }
}

pub fn model_from_str(text: &str) -> Result<ValueModel, String> {
    let mut lines = Lines::new(text);
    let (line, kind) = lines.next("kind")?;
    let model = match kind.as_slice() {
        ["ols"] => {
            let intercept = lines.real("intercept")?;
            ValueModel::Ols(LinearModel { intercept, coef: lines.array("coef")? })
        }
        ["svr"] => {
            let bias = lines.real("bias")?;
            ValueModel::Svr(SvrModel { bias, weights: lines.array("weights")? })
        }
        ["nn"] => {
            let shift = LabelShift { offset: lines.real("shift")? };
            let dropout = lines.real("dropout")?;
            let inputs = InputScaling { mean: lines.array("input_mean")?, scale: lines.array("input_scale")? };
            let mut layers = Vec::new();
            while !lines.done() {
                let (line, dims) = lines.next("layer")?;
                let dims: Vec<usize> = dims.iter().filter_map(|d| d.parse().ok()).collect();
                let [i, o] = dims[..] else {
                    return Err(format!("line {line}: 'layer' needs two sizes"));
                };
                let weights = lines.reals("weights", i * o)?;
                let bias = lines.reals("bias", o)?;
                layers.push(Dense { inputs: i, outputs: o, weights, bias });
            }
            let m = NnModel { inputs, layers, dropout, shift };
            if !m.is_consistent() {
                return Err("layer shapes do not chain into a single output".into());
            }
            ValueModel::Nn(m)
        }
        _ => return Err(format!("line {line}: kind must be ols, svr or nn")),
    };
    if !lines.done() {
        return Err("trailing content after model".into());
    }
    Ok(model)
}

pub fn save_model(path: &Path, model: &ValueModel) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, model_to_string(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ValueModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_str(&text).map_err(|msg| Error::format(path, msg))
}
