//! Brute-force reference computations for testing the engine.
//!
//! Models are read straight from the serialised JSON document and evaluated
//! by plain recursion in the linear (probability) domain. Nothing here
//! depends on the engine crate. Every routine is exponential or quadratic in
//! something and is meant for small circuits only.

use std::collections::HashMap;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("cannot read model: {0}")]
    Parse(String),
    #[error("unsupported by the oracle: {0}")]
    Unsupported(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

type Result<T> = std::result::Result<T, OracleError>;

/// Largest number of binary variables the exhaustive routines accept.
pub const MAX_ENUM_VARS: usize = 12;

const MIN_VARIANCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Leaf {
    Gaussian,
    Bernoulli,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleModel {
    pub num_vars: usize,
    pub classes: usize,
    pub sums: usize,
    pub leaves: usize,
    pub leaf: Leaf,
    pub regions: Vec<Vec<usize>>,
    /// `(parent, first child, second child)`
    pub partitions: Vec<(usize, usize, usize)>,
    pub root: usize,
    pub sum_logits: Vec<f64>,
    pub leaf_params: Vec<f64>,
    pub leaf_log_vars: Option<Vec<f64>>,
}

fn parse_err(msg: impl Into<String>) -> OracleError {
    OracleError::Parse(msg.into())
}

fn get<'a>(v: &'a Value, key: &str) -> Result<&'a Value> {
    v.get(key)
        .ok_or_else(|| parse_err(format!("missing field {key}")))
}

fn uint(v: &Value, key: &str) -> Result<usize> {
    get(v, key)?
        .as_u64()
        .map(|u| u as usize)
        .ok_or_else(|| parse_err(format!("{key} is not an unsigned integer")))
}

fn uint_list(v: &Value, what: &str) -> Result<Vec<usize>> {
    v.as_array()
        .ok_or_else(|| parse_err(format!("{what} is not an array")))?
        .iter()
        .map(|x| {
            x.as_u64()
                .map(|u| u as usize)
                .ok_or_else(|| parse_err(format!("{what} holds a non-integer")))
        })
        .collect()
}

fn floats(v: &Value, raw: bool, what: &str) -> Result<Vec<f64>> {
    if raw {
        let s = v
            .as_str()
            .ok_or_else(|| parse_err(format!("{what} is not a base64 string")))?;
        let bytes = B64
            .decode(s)
            .map_err(|e| parse_err(format!("{what}: {e}")))?;
        if bytes.len() % 8 != 0 {
            return Err(parse_err(format!("{what}: ragged byte length")));
        }
        Ok(bytes
            .chunks(8)
            .map(|c| {
                let mut b = [0u8; 8];
                b.copy_from_slice(c);
                f64::from_le_bytes(b)
            })
            .collect())
    } else {
        v.as_array()
            .ok_or_else(|| parse_err(format!("{what} is not an array")))?
            .iter()
            .map(|x| {
                x.as_f64()
                    .ok_or_else(|| parse_err(format!("{what} holds a non-number")))
            })
            .collect()
    }
}

impl OracleModel {
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Value = serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
        if uint(&doc, "format_version")? != 1 {
            return Err(OracleError::Unsupported(
                "format version other than 1".into(),
            ));
        }
        let raw = match get(&doc, "encoding")?.as_str() {
            Some("raw") => true,
            Some("text") => false,
            _ => return Err(parse_err("unknown encoding")),
        };
        let st = get(&doc, "structure")?;
        let leaf = match get(st, "leaf")?.as_str() {
            Some("gaussian") => Leaf::Gaussian,
            Some("bernoulli") => Leaf::Bernoulli,
            other => return Err(OracleError::Unsupported(format!("leaf type {other:?}"))),
        };
        let regions = get(&doc, "regions")?
            .as_array()
            .ok_or_else(|| parse_err("regions is not an array"))?
            .iter()
            .map(|r| uint_list(r, "region scope"))
            .collect::<Result<Vec<_>>>()?;
        let partitions = get(&doc, "partitions")?
            .as_array()
            .ok_or_else(|| parse_err("partitions is not an array"))?
            .iter()
            .map(|p| match uint_list(p, "partition")?[..] {
                [a, b, c] => Ok((a, b, c)),
                _ => Err(parse_err("partition must have three entries")),
            })
            .collect::<Result<Vec<_>>>()?;
        let params = get(&doc, "parameters")?;
        let leaf_log_vars = match params.get("leaf_log_vars") {
            None | Some(Value::Null) => None,
            Some(v) => Some(floats(v, raw, "leaf_log_vars")?),
        };
        let m = OracleModel {
            num_vars: uint(st, "num_vars")?,
            classes: uint(st, "classes")?,
            sums: uint(st, "sums")?,
            leaves: uint(st, "leaves")?,
            leaf,
            regions,
            partitions,
            root: uint(&doc, "root")?,
            sum_logits: floats(get(params, "sum_logits")?, raw, "sum_logits")?,
            leaf_params: floats(get(params, "leaf_params")?, raw, "leaf_params")?,
            leaf_log_vars,
        };
        m.check_lengths()?;
        Ok(m)
    }

    fn check_lengths(&self) -> Result<()> {
        if self.root >= self.regions.len() {
            return Err(parse_err("root out of range"));
        }
        if self
            .partitions
            .iter()
            .any(|&(p, a, b)| p.max(a).max(b) >= self.regions.len())
        {
            return Err(parse_err("partition refers to a missing region"));
        }
        let (logits, slots) = self.layout_sizes();
        if self.sum_logits.len() != logits || self.leaf_params.len() != slots {
            return Err(parse_err(format!(
                "parameter vectors have {} and {} entries, structure needs {logits} and {slots}",
                self.sum_logits.len(),
                self.leaf_params.len()
            )));
        }
        if self
            .leaf_log_vars
            .as_ref()
            .is_some_and(|v| v.len() != slots)
        {
            return Err(parse_err("log-variance vector has the wrong length"));
        }
        Ok(())
    }

    fn has_children(&self, region: usize) -> bool {
        self.partitions.iter().any(|&(p, _, _)| p == region)
    }

    fn width(&self, region: usize) -> usize {
        if region == self.root {
            self.classes
        } else if self.has_children(region) {
            self.sums
        } else {
            self.leaves
        }
    }

    fn num_inputs(&self, region: usize) -> usize {
        if !self.has_children(region) {
            return self.leaves;
        }
        self.partitions
            .iter()
            .filter(|&&(p, _, _)| p == region)
            .map(|&(_, a, b)| self.width(a) * self.width(b))
            .sum()
    }

    /// Start of each region's leaf parameters and sum logits, when it has any.
    fn offsets(&self) -> (Vec<Option<usize>>, Vec<Option<usize>>) {
        let mut leaf = vec![None; self.regions.len()];
        let mut sum = vec![None; self.regions.len()];
        let (mut lo, mut so) = (0, 0);
        for r in 0..self.regions.len() {
            if !self.has_children(r) {
                leaf[r] = Some(lo);
                lo += self.leaves * self.regions[r].len();
            }
            if r == self.root || self.has_children(r) {
                sum[r] = Some(so);
                so += self.width(r) * self.num_inputs(r);
            }
        }
        (leaf, sum)
    }

    fn layout_sizes(&self) -> (usize, usize) {
        let mut logits = 0;
        let mut slots = 0;
        for r in 0..self.regions.len() {
            if !self.has_children(r) {
                slots += self.leaves * self.regions[r].len();
            }
            if r == self.root || self.has_children(r) {
                logits += self.width(r) * self.num_inputs(r);
            }
        }
        (logits, slots)
    }

    /// All parameters: logits, leaf parameters, then log-variances.
    pub fn parameters(&self) -> Vec<f64> {
        let mut v = self.sum_logits.clone();
        v.extend(&self.leaf_params);
        if let Some(lv) = &self.leaf_log_vars {
            v.extend(lv);
        }
        v
    }

    pub fn with_parameters(&self, flat: &[f64]) -> Result<Self> {
        let a = self.sum_logits.len();
        let b = a + self.leaf_params.len();
        if flat.len() != self.parameters().len() {
            return Err(parse_err("flat parameter vector has the wrong length"));
        }
        let mut m = self.clone();
        m.sum_logits = flat[..a].to_vec();
        m.leaf_params = flat[a..b].to_vec();
        if m.leaf_log_vars.is_some() {
            m.leaf_log_vars = Some(flat[b..].to_vec());
        }
        Ok(m)
    }

    fn leaf_value(&self, slot: usize, x: f64) -> f64 {
        let theta = self.leaf_params[slot];
        match self.leaf {
            Leaf::Gaussian => {
                let var = match &self.leaf_log_vars {
                    Some(lv) => lv[slot].exp().max(MIN_VARIANCE),
                    None => 1.0,
                };
                let d = x - theta;
                (-d * d / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
            }
            Leaf::Bernoulli => {
                let p = 1.0 / (1.0 + (-theta).exp());
                if x == 1.0 {
                    p
                } else {
                    1.0 - p
                }
            }
        }
    }

    fn region_value(
        &self,
        region: usize,
        x: &[f64],
        missing: &[bool],
        offs: &(Vec<Option<usize>>, Vec<Option<usize>>),
        memo: &mut HashMap<usize, Vec<f64>>,
    ) -> Vec<f64> {
        if let Some(v) = memo.get(&region) {
            return v.clone();
        }
        let scope = &self.regions[region];
        let inputs: Vec<f64> = if self.has_children(region) {
            let mut inputs = Vec::new();
            for &(p, a, b) in &self.partitions {
                if p != region {
                    continue;
                }
                let left = self.region_value(a, x, missing, offs, memo);
                let right = self.region_value(b, x, missing, offs, memo);
                for l in &left {
                    for r in &right {
                        inputs.push(l * r);
                    }
                }
            }
            inputs
        } else {
            let start = offs.0[region].expect("leaf region has leaf parameters");
            (0..self.leaves)
                .map(|node| {
                    scope
                        .iter()
                        .enumerate()
                        .filter(|&(_, &v)| !missing[v])
                        .map(|(t, &v)| self.leaf_value(start + node * scope.len() + t, x[v]))
                        .product()
                })
                .collect()
        };
        let out = match offs.1[region] {
            None => inputs,
            Some(start) => {
                let k = inputs.len();
                (0..self.width(region))
                    .map(|node| {
                        let z = &self.sum_logits[start + node * k..start + (node + 1) * k];
                        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
                        let total: f64 = e.iter().sum();
                        e.iter().zip(&inputs).map(|(w, v)| w / total * v).sum()
                    })
                    .collect()
            }
        };
        memo.insert(region, out.clone());
        out
    }

    /// `S_c(x)` for every class, with `missing` variables integrated out.
    pub fn root_values(&self, x: &[f64], missing: &[bool]) -> Result<Vec<f64>> {
        if x.len() != self.num_vars || missing.len() != self.num_vars {
            return Err(OracleError::Unsupported(
                "assignment length differs from num_vars".into(),
            ));
        }
        let offs = self.offsets();
        let mut memo = HashMap::new();
        Ok(self.region_value(self.root, x, missing, &offs, &mut memo))
    }

    pub fn log_roots(&self, x: &[f64], missing: &[bool]) -> Result<Vec<f64>> {
        Ok(self
            .root_values(x, missing)?
            .into_iter()
            .map(f64::ln)
            .collect())
    }
}

fn check_discrete(m: &OracleModel) -> Result<()> {
    if m.leaf != Leaf::Bernoulli {
        return Err(OracleError::Unsupported(
            "enumeration needs Bernoulli leaves".into(),
        ));
    }
    if m.num_vars > MAX_ENUM_VARS {
        return Err(OracleError::Unsupported(format!(
            "{} variables exceed the enumeration limit of {MAX_ENUM_VARS}",
            m.num_vars
        )));
    }
    Ok(())
}

/// Assignment number `k`: variable `v` takes bit `v` of `k`.
pub fn assignment(k: usize, num_vars: usize) -> Vec<f64> {
    (0..num_vars).map(|v| ((k >> v) & 1) as f64).collect()
}

/// `table[c][k] = ln S_c(assignment(k))` over all `2^n` assignments.
pub fn brute_force_mass(m: &OracleModel) -> Result<Vec<Vec<f64>>> {
    check_discrete(m)?;
    let none = vec![false; m.num_vars];
    let mut table = vec![Vec::with_capacity(1 << m.num_vars); m.classes];
    for k in 0..1usize << m.num_vars {
        let r = m.log_roots(&assignment(k, m.num_vars), &none)?;
        for (c, v) in r.into_iter().enumerate() {
            table[c].push(v);
        }
    }
    Ok(table)
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log-marginal per class: log-sum-exp of the full joint over every
/// completion of the `missing` variables. Values of `observed` at missing
/// positions are ignored.
pub fn brute_force_marginal(
    m: &OracleModel,
    observed: &[f64],
    missing: &[usize],
) -> Result<Vec<f64>> {
    check_discrete(m)?;
    if observed.len() != m.num_vars || missing.iter().any(|&v| v >= m.num_vars) {
        return Err(OracleError::Unsupported(
            "assignment does not fit the model".into(),
        ));
    }
    let none = vec![false; m.num_vars];
    let mut per_class = vec![Vec::new(); m.classes];
    for k in 0..1usize << missing.len() {
        let mut x = observed.to_vec();
        for (bit, &v) in missing.iter().enumerate() {
            x[v] = ((k >> bit) & 1) as f64;
        }
        for (c, r) in m.log_roots(&x, &none)?.into_iter().enumerate() {
            per_class[c].push(r);
        }
    }
    Ok(per_class.iter().map(|v| log_sum_exp(v)).collect())
}

/// Central differences `(f(θ + h e_i) − f(θ − h e_i)) / 2h` for every `i`.
pub fn finite_diff_gradient(
    mut objective: impl FnMut(&[f64]) -> f64,
    params: &[f64],
    step: f64,
) -> Result<Vec<f64>> {
    let mut theta = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = theta[i];
        theta[i] = orig + step;
        let up = objective(&theta);
        theta[i] = orig - step;
        let down = objective(&theta);
        theta[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(OracleError::NonFinite(format!(
                "objective probe at parameter {i}"
            )));
        }
        grad.push((up - down) / (2.0 * step));
    }
    Ok(grad)
}

/// Hybrid objective `λ·CE + (1 − λ)·nLL` computed from the oracle's own
/// evaluation, for cross-checking gradients.
pub fn hybrid_objective(
    m: &OracleModel,
    rows: &[Vec<f64>],
    labels: &[usize],
    lambda: f64,
) -> Result<f64> {
    let none = vec![false; m.num_vars];
    let (mut ce, mut nll) = (0.0, 0.0);
    for (x, &y) in rows.iter().zip(labels) {
        let s = m.root_values(x, &none)?;
        let total: f64 = s.iter().sum();
        ce -= (s[y] / total).ln();
        nll -= s[y].ln();
    }
    let n = rows.len() as f64;
    let ce = ce / n;
    let nll = nll / (n * m.num_vars as f64);
    Ok(if lambda == 1.0 {
        ce
    } else if lambda == 0.0 {
        nll
    } else {
        lambda * ce + (1.0 - lambda) * nll
    })
}

/// Total mass of class root `class` of a Gaussian model over at most two
/// variables, by the midpoint rule on a box covering every leaf mean by
/// `radius` standard deviations.
pub fn quadrature_mass(m: &OracleModel, class: usize, radius: f64, steps: usize) -> Result<f64> {
    if m.leaf != Leaf::Gaussian || m.num_vars > 2 {
        return Err(OracleError::Unsupported(
            "quadrature needs Gaussian leaves over ≤ 2 variables".into(),
        ));
    }
    let sd: Vec<f64> = (0..m.leaf_params.len())
        .map(|s| {
            m.leaf_log_vars
                .as_ref()
                .map_or(1.0, |lv| lv[s].exp().max(MIN_VARIANCE).sqrt())
        })
        .collect();
    let offs = m.offsets();
    let mut lo = vec![f64::INFINITY; m.num_vars];
    let mut hi = vec![f64::NEG_INFINITY; m.num_vars];
    for (r, scope) in m.regions.iter().enumerate() {
        let Some(start) = offs.0[r] else { continue };
        for node in 0..m.leaves {
            for (t, &v) in scope.iter().enumerate() {
                let s = start + node * scope.len() + t;
                lo[v] = lo[v].min(m.leaf_params[s] - radius * sd[s]);
                hi[v] = hi[v].max(m.leaf_params[s] + radius * sd[s]);
            }
        }
    }
    let h: Vec<f64> = lo
        .iter()
        .zip(&hi)
        .map(|(l, u)| (u - l) / steps as f64)
        .collect();
    let none = vec![false; m.num_vars];
    let mut total = 0.0;
    let cells = steps.pow(m.num_vars as u32);
    for k in 0..cells {
        let mut x = vec![0.0; m.num_vars];
        let mut rest = k;
        for v in 0..m.num_vars {
            x[v] = lo[v] + (rest % steps) as f64 * h[v] + 0.5 * h[v];
            rest /= steps;
        }
        total += m.root_values(&x, &none)?[class];
    }
    Ok(total * h.iter().product::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coin_model() -> OracleModel {
        // One variable: a single leaf region that is also the root.
        OracleModel {
            num_vars: 1,
            classes: 1,
            sums: 1,
            leaves: 1,
            leaf: Leaf::Bernoulli,
            regions: vec![vec![0]],
            partitions: vec![],
            root: 0,
            sum_logits: vec![0.0],
            leaf_params: vec![0.0],
            leaf_log_vars: None,
        }
    }

    #[test]
    fn fair_coin_table() {
        let t = brute_force_mass(&coin_model()).unwrap();
        assert_eq!(t.len(), 1);
        for v in &t[0] {
            assert!((v - 0.5f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn marginal_edge_cases() {
        let m = coin_model();
        assert!(brute_force_marginal(&m, &[1.0], &[0]).unwrap()[0].abs() < 1e-15);
        let full = brute_force_marginal(&m, &[1.0], &[]).unwrap()[0];
        assert!((full - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn quadratic_gradient() {
        let f = |t: &[f64]| 3.0 * t[0] * t[0] - 2.0 * t[0] * t[1] + t[1];
        let g = finite_diff_gradient(f, &[1.5, -2.0], 1e-3).unwrap();
        assert!((g[0] - (6.0 * 1.5 + 4.0)).abs() < 1e-9);
        assert!((g[1] - (-3.0 + 1.0)).abs() < 1e-9);
        let bad = finite_diff_gradient(|t: &[f64]| t[0].ln(), &[0.0], 1e-3);
        assert!(matches!(bad, Err(OracleError::NonFinite(_))));
    }

    #[test]
    fn gaussian_rejected_by_enumeration() {
        let mut m = coin_model();
        m.leaf = Leaf::Gaussian;
        assert!(matches!(
            brute_force_mass(&m),
            Err(OracleError::Unsupported(_))
        ));
        assert!((quadrature_mass(&m, 0, 10.0, 2000).unwrap() - 1.0).abs() < 1e-9);
    }
}
