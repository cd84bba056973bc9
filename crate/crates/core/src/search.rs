//! Progressive architecture search under a parameter budget.
//!
//! Phase 1 picks the width, phase 2 removes plain hidden layers, phase 3
//! trades plain layers for skip concatenations at constant parameter count
//! and phase 4 dilates the difference networks.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::nn::{count_params, HiddenBlock, NetworkSpec, Target, FIRST_SKIP_LAYER};
use crate::train::{train, Dataset, TrainConfig};

/// Smallest network the search will build: input, one hidden, output.
pub const MIN_DEPTH: usize = 3;
/// Earliest layer index that may read two skip sources (`i - 5`, `i - 10`).
pub const FIRST_DOUBLE_SKIP_LAYER: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct SearchBudget {
    pub max_params: u64,
    pub max_depth: usize,
    pub widths: Vec<usize>,
    pub coarse_step: usize,
    pub fine_step: usize,
    /// Upper bound on skip variants evaluated in phase 3.
    pub max_variants: usize,
    /// Hidden dilation applied to `gr`/`gb` in phase 4.
    pub dilation: usize,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self {
            max_params: 600_000,
            max_depth: 40,
            widths: vec![32, 64, 128],
            coarse_step: 5,
            fine_step: 2,
            max_variants: 32,
            dilation: 3,
        }
    }
}

impl SearchBudget {
    pub fn validate(&self) -> Result<()> {
        if self.max_params == 0 || self.max_depth < MIN_DEPTH || self.widths.is_empty() {
            return Err(Error::Invalid("budget needs positive params, depth >= 3 and a width".into()));
        }
        if self.widths.contains(&0) || self.coarse_step == 0 || self.fine_step == 0 || self.dilation == 0 {
            return Err(Error::Invalid("widths, steps and dilation must be positive".into()));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut b = SearchBudget::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("line {}: expected key = value", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            let bad = || Error::Invalid(format!("line {}: bad value `{v}` for `{k}`", n + 1));
            let num = || v.parse::<usize>().map_err(|_| bad());
            match k {
                "max_params" => b.max_params = v.parse().map_err(|_| bad())?,
                "max_depth" => b.max_depth = num()?,
                "widths" => {
                    b.widths = v.split_whitespace().map(|w| w.parse().map_err(|_| bad())).collect::<Result<_>>()?
                }
                "coarse_step" => b.coarse_step = num()?,
                "fine_step" => b.fine_step = num()?,
                "max_variants" => b.max_variants = num()?,
                "dilation" => b.dilation = num()?,
                _ => return Err(Error::Invalid(format!("line {}: unknown key `{k}`", n + 1))),
            }
        }
        b.validate()?;
        Ok(b)
    }
}

/// `min(max_depth, floor((P - 9 (C K + K)) / K^2) + 2)`.
///
/// This counts a hidden layer as `K^2` weights rather than `9 K^2`, so for
/// wide networks it can exceed what the budget allows; candidates are
/// clamped separately by [`fitting_depth`].
pub fn depth_bound(k: usize, c: usize, budget: &SearchBudget) -> usize {
    let (k, c, p) = (k as i128, c as i128, budget.max_params as i128);
    let free = p - 9 * (c * k + k);
    let bound = if free < 0 { 0 } else { free / (k * k) + 2 };
    bound.min(budget.max_depth as i128) as usize
}

/// Largest plain depth not above `depth_bound` whose parameter count fits.
pub fn fitting_depth(target: Target, k: usize, budget: &SearchBudget) -> Option<usize> {
    let top = depth_bound(k, target.input_channels(), budget).min(budget.max_depth);
    (MIN_DEPTH..=top)
        .rev()
        .find(|&d| NetworkSpec::plain(target, k, d, 1).is_ok_and(|s| count_params(&s) <= budget.max_params))
}

/// Hidden chain with `units` weight units of which `singles` read `i - 5`
/// and `doubles` read `i - 5` and `i - 10`. Concatenating blocks sit at the
/// end of the chain, double ones last.
fn chain(units: usize, singles: usize, doubles: usize) -> Option<Vec<HiddenBlock>> {
    let n = units.checked_sub(singles + 2 * doubles)?;
    if n == 0 || singles + doubles > n {
        return None;
    }
    let first_concat = n + 1 - (singles + doubles);
    let first_double = n + 1 - doubles;
    if singles + doubles > 0 && first_concat < FIRST_SKIP_LAYER {
        return None;
    }
    if doubles > 0 && first_double < FIRST_DOUBLE_SKIP_LAYER {
        return None;
    }
    Some(
        (1..=n)
            .map(|i| {
                if i >= first_double {
                    HiddenBlock::concat(&[5, 10])
                } else if i >= first_concat {
                    HiddenBlock::concat(&[5])
                } else {
                    HiddenBlock::plain()
                }
            })
            .collect(),
    )
}

/// Skip-connection variants with the same hidden weight units as `spec` and
/// fewer layers, shallowest first (ties: fewer double skips first).
pub fn skip_variants(spec: &NetworkSpec) -> Vec<NetworkSpec> {
    if spec.depth() < 7 {
        return Vec::new();
    }
    let units = spec.hidden_units();
    let mut shapes = Vec::new();
    for doubles in 0..=units / 2 {
        for singles in 0..=units {
            if singles + doubles == 0 {
                continue;
            }
            if let Some(blocks) = chain(units, singles, doubles) {
                shapes.push((blocks.len(), doubles, blocks));
            }
        }
    }
    shapes.sort_by_key(|(n, doubles, _)| (*n, *doubles));
    shapes
        .into_iter()
        .filter_map(|(_, _, blocks)| NetworkSpec::build(spec.target, spec.width, &blocks, spec.hidden_dilation()).ok())
        .collect()
}

/// `layer:source+source` for each concatenating layer, `|`-separated.
pub fn skip_layout(spec: &NetworkSpec) -> String {
    let parts: Vec<String> = spec
        .layers
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.skip_sources.is_empty())
        .map(|(i, l)| {
            let src: Vec<String> = l.skip_sources.iter().map(|s| s.to_string()).collect();
            format!("{i}:{}", src.join("+"))
        })
        .collect();
    if parts.is_empty() {
        "-".into()
    } else {
        parts.join("|")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub id: usize,
    pub phase: u8,
    pub width: usize,
    pub depth: usize,
    pub params: u64,
    pub skip_layout: String,
    pub dilation: usize,
    pub val_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    pub spec: NetworkSpec,
    pub width: usize,
    pub depth: usize,
    pub params: u64,
    pub trace: Vec<Candidate>,
}

impl SearchResult {
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("id,phase,width,depth,params,skips,dilation,val_error\n");
        for c in &self.trace {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                c.id, c.phase, c.width, c.depth, c.params, c.skip_layout, c.dilation, c.val_error
            )
            .unwrap();
        }
        s
    }
}

struct Driver<'a, F> {
    oracle: F,
    budget: &'a SearchBudget,
    trace: Vec<Candidate>,
}

impl<F: FnMut(&NetworkSpec) -> Result<f64>> Driver<'_, F> {
    fn eval(&mut self, phase: u8, spec: &NetworkSpec) -> Result<f64> {
        let params = count_params(spec);
        if params > self.budget.max_params || spec.depth() > self.budget.max_depth {
            return Err(Error::Invalid(format!("candidate with {params} params, depth {} breaks the budget", spec.depth())));
        }
        let err = (self.oracle)(spec)?;
        if err.is_nan() {
            return Err(Error::Numeric("oracle returned NaN".into()));
        }
        log::debug!("phase {phase}: K={} D={} P={params} err={err}", spec.width, spec.depth());
        self.trace.push(Candidate {
            id: self.trace.len(),
            phase,
            width: spec.width,
            depth: spec.depth(),
            params,
            skip_layout: skip_layout(spec),
            dilation: spec.hidden_dilation(),
            val_error: err,
        });
        Ok(err)
    }

    /// Shrink by `step` while the error does not increase.
    fn shrink(&mut self, target: Target, width: usize, mut depth: usize, mut err: f64, step: usize) -> Result<(usize, f64)> {
        while depth > MIN_DEPTH {
            let next = depth.saturating_sub(step).max(MIN_DEPTH);
            let e = self.eval(2, &NetworkSpec::plain(target, width, next, 1)?)?;
            if e > err {
                break;
            }
            depth = next;
            err = e;
        }
        Ok((depth, err))
    }
}

/// Run all four phases with `oracle` as the validation error of a spec.
pub fn progressive_search(
    target: Target,
    budget: &SearchBudget,
    oracle: impl FnMut(&NetworkSpec) -> Result<f64>,
) -> Result<SearchResult> {
    budget.validate()?;
    let mut drv = Driver { oracle, budget, trace: Vec::new() };

    let mut best: Option<(usize, usize, f64)> = None;
    for &k in &budget.widths {
        let Some(d) = fitting_depth(target, k, budget) else {
            log::warn!("width {k} cannot fit the budget at any depth");
            continue;
        };
        let e = drv.eval(1, &NetworkSpec::plain(target, k, d, 1)?)?;
        if best.is_none_or(|(_, _, be)| e < be) {
            best = Some((k, d, e));
        }
    }
    let (width, depth, err) = best.ok_or_else(|| Error::Invalid("no width fits the parameter budget".into()))?;

    let (depth, err) = drv.shrink(target, width, depth, err, budget.coarse_step)?;
    let (depth, err) = drv.shrink(target, width, depth, err, budget.fine_step)?;
    let mut spec = NetworkSpec::plain(target, width, depth, 1)?;

    let mut chosen: Option<(NetworkSpec, f64)> = None;
    for v in skip_variants(&spec).into_iter().take(budget.max_variants) {
        let e = drv.eval(3, &v)?;
        let better = match &chosen {
            None => true,
            Some((c, ce)) => v.depth() < c.depth() || (v.depth() == c.depth() && e < *ce),
        };
        if e <= err && better {
            chosen = Some((v, e));
        }
    }
    if let Some((v, _)) = chosen {
        spec = v;
    }

    if target != Target::G {
        spec = spec.with_hidden_dilation(budget.dilation)?;
    }
    let params = count_params(&spec);
    Ok(SearchResult { width: spec.width, depth: spec.depth(), params, spec, trace: drv.trace })
}

/// Validation error after a short training run, as a search oracle.
pub struct TrainingOracle<'a> {
    pub data: &'a Dataset,
    pub cfg: TrainConfig,
}

impl TrainingOracle<'_> {
    pub fn eval(&self, spec: &NetworkSpec) -> Result<f64> {
        let out = train(spec, self.data, &self.cfg)?;
        out.trace
            .last()
            .map(|r| r.val_loss)
            .ok_or_else(|| Error::Invalid("oracle training ran no epochs".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_bound_examples() {
        let b = SearchBudget::default();
        assert_eq!(depth_bound(32, 3, &b), 40);
        assert_eq!(depth_bound(64, 3, &b), 40);
        assert_eq!(depth_bound(128, 3, &b), 38);
    }

    #[test]
    fn fitting_depth_respects_budget() {
        let b = SearchBudget::default();
        assert_eq!(fitting_depth(Target::G, 32, &b), Some(40));
        assert_eq!(fitting_depth(Target::G, 64, &b), Some(18));
        assert_eq!(fitting_depth(Target::G, 128, &b), Some(6));
        let tiny = SearchBudget { max_params: 10, ..b };
        assert_eq!(fitting_depth(Target::G, 32, &tiny), None);
    }

    #[test]
    fn variants_of_ten_plain_layers() {
        let spec = NetworkSpec::plain(Target::G, 8, 12, 1).unwrap();
        let vs = skip_variants(&spec);
        assert!(!vs.is_empty());
        let p = count_params(&spec);
        assert!(vs.iter().all(|v| count_params(v) == p && v.depth() < spec.depth()));
        assert!(vs.iter().any(|v| {
            let blocks = v.hidden_blocks();
            blocks.len() == 8 && blocks.iter().filter(|b| b.skip_offsets.len() == 1).count() == 2
        }));
        for w in vs.windows(2) {
            assert!(w[0].depth() <= w[1].depth());
        }
    }

    #[test]
    fn shallow_spec_has_no_variants() {
        assert!(skip_variants(&NetworkSpec::plain(Target::G, 8, 6, 1).unwrap()).is_empty());
    }

    #[test]
    fn layout_string() {
        assert_eq!(skip_layout(&NetworkSpec::plain(Target::G, 8, 5, 1).unwrap()), "-");
        let gr = NetworkSpec::default_for(Target::Gr);
        assert_eq!(skip_layout(&gr), "5:0|10:5|15:10|20:15|25:20");
    }

    #[test]
    fn budget_text() {
        let b = SearchBudget::parse("max_params = 1000\nwidths = 8 16\n").unwrap();
        assert_eq!(b.widths, vec![8, 16]);
        assert_eq!(b.max_params, 1000);
        assert!(SearchBudget::parse("widths =").is_err());
    }
}
