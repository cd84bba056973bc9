//! Declarative network descriptions.
//!
//! A network is a chain of 3x3 convolution blocks: an input conv + ReLU, hidden
//! conv + BN + ReLU blocks, and a final plain conv producing one channel.
//! A hidden block may additionally read the outputs of earlier blocks
//! (`skip_sources`), concatenated after the previous block's output.
//!
//! Layers are numbered from zero; skip concatenation is allowed from index
//! [`FIRST_SKIP_LAYER`] (the sixth block) onwards.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::{Error, Result};

use super::ops::KERNEL_TAPS;

pub const MAX_DEPTH: usize = 40;
pub const FIRST_SKIP_LAYER: usize = 5;
pub const DEFAULT_WIDTH: usize = 32;

/// Which sub-network: green, green-minus-red, or green-minus-blue.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Target {
    G,
    Gr,
    Gb,
}

impl Target {
    pub const ALL: [Target; 3] = [Target::G, Target::Gr, Target::Gb];

    pub fn input_channels(self) -> usize {
        match self {
            Target::G => 3,
            Target::Gr | Target::Gb => 2,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Target::G => 0,
            Target::Gr => 1,
            Target::Gb => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        Target::ALL
            .into_iter()
            .find(|t| t.tag() == tag)
            .ok_or_else(|| Error::Format(format!("unknown network tag {tag}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Target::G => "g",
            Target::Gr => "gr",
            Target::Gb => "gb",
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "g" => Ok(Target::G),
            "gr" => Ok(Target::Gr),
            "gb" => Ok(Target::Gb),
            other => Err(Error::Invalid(format!("unknown target `{other}` (g, gr, gb)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerKind {
    /// conv + ReLU
    Input,
    /// conv + BN + ReLU
    Hidden,
    /// conv only
    Output,
}

impl LayerKind {
    pub fn code(self) -> u8 {
        match self {
            LayerKind::Input => 0,
            LayerKind::Hidden => 1,
            LayerKind::Output => 2,
        }
    }

    pub fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(LayerKind::Input),
            1 => Ok(LayerKind::Hidden),
            2 => Ok(LayerKind::Output),
            _ => Err(Error::Format(format!("unknown layer kind {c}"))),
        }
    }

    fn word(self) -> &'static str {
        match self {
            LayerKind::Input => "input",
            LayerKind::Hidden => "hidden",
            LayerKind::Output => "output",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub dilation: usize,
    pub skip_sources: Vec<usize>,
}

impl LayerSpec {
    pub fn has_batch_norm(&self) -> bool {
        self.kind == LayerKind::Hidden
    }

    pub fn kernel_len(&self) -> usize {
        KERNEL_TAPS * self.in_channels * self.out_channels
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NetworkSpec {
    pub target: Target,
    pub input_channels: usize,
    pub width: usize,
    pub layers: Vec<LayerSpec>,
}

/// One hidden block in builder form: which earlier blocks it reads, as
/// backward offsets (`5` means "the block five positions earlier").
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HiddenBlock {
    pub skip_offsets: Vec<usize>,
}

impl HiddenBlock {
    pub fn plain() -> Self {
        Self::default()
    }

    pub fn concat(offsets: &[usize]) -> Self {
        Self { skip_offsets: offsets.to_vec() }
    }

    /// Parameter weight in units of one plain `K -> K` block.
    pub fn units(&self) -> usize {
        1 + self.skip_offsets.len()
    }
}

impl NetworkSpec {
    /// Build a chain from hidden-block descriptions.
    pub fn build(
        target: Target,
        width: usize,
        hidden: &[HiddenBlock],
        dilation: usize,
    ) -> Result<Self> {
        let cin = target.input_channels();
        let mut layers = vec![LayerSpec {
            kind: LayerKind::Input,
            in_channels: cin,
            out_channels: width,
            dilation: 1,
            skip_sources: vec![],
        }];
        for (n, block) in hidden.iter().enumerate() {
            let idx = n + 1;
            let mut sources = Vec::with_capacity(block.skip_offsets.len());
            for &off in &block.skip_offsets {
                if off < 2 || off > idx {
                    return Err(Error::Invalid(format!(
                        "skip offset {off} invalid at layer {idx}"
                    )));
                }
                sources.push(idx - off);
            }
            layers.push(LayerSpec {
                kind: LayerKind::Hidden,
                in_channels: width * (1 + sources.len()),
                out_channels: width,
                dilation,
                skip_sources: sources,
            });
        }
        layers.push(LayerSpec {
            kind: LayerKind::Output,
            in_channels: width,
            out_channels: 1,
            dilation: 1,
            skip_sources: vec![],
        });
        let spec = NetworkSpec { target, input_channels: cin, width, layers };
        spec.validate()?;
        Ok(spec)
    }

    /// `depth` blocks in total, no skips.
    pub fn plain(target: Target, width: usize, depth: usize, dilation: usize) -> Result<Self> {
        if depth < 3 {
            return Err(Error::Invalid(format!("depth {depth} below 3")));
        }
        Self::build(target, width, &vec![HiddenBlock::plain(); depth - 2], dilation)
    }

    /// Released default architecture for each sub-network.
    ///
    /// - `g`: 3->32 input, 30 plain hidden blocks, 32->1 output, dilation 1.
    /// - `gr`: 2->32 input, 29 hidden blocks of which layers 5, 10, 15, 20, 25
    ///   also read layer `i - 5`, dilation 3.
    /// - `gb`: as `gr` with 31 hidden blocks.
    pub fn default_for(target: Target) -> Self {
        let (hidden, dilation) = match target {
            Target::G => (30, 1),
            Target::Gr => (29, 3),
            Target::Gb => (31, 3),
        };
        let blocks: Vec<HiddenBlock> = (1..=hidden)
            .map(|i| {
                if target != Target::G && i % 5 == 0 && i <= 25 {
                    HiddenBlock::concat(&[5])
                } else {
                    HiddenBlock::plain()
                }
            })
            .collect();
        Self::build(target, DEFAULT_WIDTH, &blocks, dilation)
            .expect("default architectures are valid")
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn hidden_blocks(&self) -> Vec<HiddenBlock> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.kind == LayerKind::Hidden)
            .map(|(i, l)| HiddenBlock {
                skip_offsets: l.skip_sources.iter().map(|&s| i - s).collect(),
            })
            .collect()
    }

    /// Sum of [`HiddenBlock::units`] over hidden blocks.
    pub fn hidden_units(&self) -> usize {
        self.hidden_blocks().iter().map(HiddenBlock::units).sum()
    }

    pub fn hidden_dilation(&self) -> usize {
        self.layers
            .iter()
            .find(|l| l.kind == LayerKind::Hidden)
            .map(|l| l.dilation)
            .unwrap_or(1)
    }

    pub fn with_hidden_dilation(&self, dilation: usize) -> Result<Self> {
        let mut s = self.clone();
        for l in s.layers.iter_mut().filter(|l| l.kind == LayerKind::Hidden) {
            l.dilation = dilation;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Invalid(msg));
        let n = self.layers.len();
        if n < 2 {
            return bad(format!("network needs at least 2 layers, has {n}"));
        }
        if n > MAX_DEPTH {
            return bad(format!("depth {n} exceeds {MAX_DEPTH}"));
        }
        if self.input_channels != self.target.input_channels() {
            return bad(format!(
                "`{}` network takes {} input channels, spec says {}",
                self.target,
                self.target.input_channels(),
                self.input_channels
            ));
        }
        for (i, l) in self.layers.iter().enumerate() {
            let expected_kind = if i == 0 {
                LayerKind::Input
            } else if i == n - 1 {
                LayerKind::Output
            } else {
                LayerKind::Hidden
            };
            if l.kind != expected_kind {
                return bad(format!("layer {i} is {:?}, expected {expected_kind:?}", l.kind));
            }
            if !matches!(l.dilation, 1 | 3) {
                return bad(format!("layer {i} dilation {} not in {{1, 3}}", l.dilation));
            }
            let expected_out = if l.kind == LayerKind::Output { 1 } else { self.width };
            if l.out_channels != expected_out {
                return bad(format!("layer {i} outputs {} channels", l.out_channels));
            }
            if !l.skip_sources.is_empty() {
                if l.kind != LayerKind::Hidden || i < FIRST_SKIP_LAYER {
                    return bad(format!("layer {i} may not take skip inputs"));
                }
                if l.skip_sources.iter().any(|&s| s + 1 >= i) {
                    return bad(format!("layer {i} skip sources {:?} not earlier", l.skip_sources));
                }
                let mut sorted = l.skip_sources.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != l.skip_sources.len() {
                    return bad(format!("layer {i} repeats a skip source"));
                }
            }
            let expected_in = if i == 0 {
                self.input_channels
            } else {
                self.layers[i - 1].out_channels
                    + l.skip_sources.iter().map(|&s| self.layers[s].out_channels).sum::<usize>()
            };
            if l.in_channels != expected_in {
                return bad(format!(
                    "layer {i} takes {} channels, inputs provide {expected_in}",
                    l.in_channels
                ));
            }
        }
        Ok(())
    }

    /// Plain-text form, one `key = value` per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "name = {}", self.target).unwrap();
        writeln!(s, "input_channels = {}", self.input_channels).unwrap();
        writeln!(s, "width = {}", self.width).unwrap();
        for l in &self.layers {
            write!(
                s,
                "layer = {} {} {} {}",
                l.kind.word(),
                l.in_channels,
                l.out_channels,
                l.dilation
            )
            .unwrap();
            for src in &l.skip_sources {
                write!(s, " {src}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut target = None;
        let mut input_channels = None;
        let mut width = None;
        let mut layers = Vec::new();
        let num = |v: &str| {
            v.parse::<usize>().map_err(|_| Error::Invalid(format!("expected integer, got `{v}`")))
        };
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("expected `key = value`, got `{line}`")))?;
            let value = value.trim();
            match key.trim() {
                "name" => target = Some(value.parse::<Target>()?),
                "input_channels" => input_channels = Some(num(value)?),
                "width" => width = Some(num(value)?),
                "layer" => {
                    let parts: Vec<&str> = value.split_whitespace().collect();
                    if parts.len() < 4 {
                        return Err(Error::Invalid(format!("short layer line `{line}`")));
                    }
                    let kind = match parts[0] {
                        "input" => LayerKind::Input,
                        "hidden" => LayerKind::Hidden,
                        "output" => LayerKind::Output,
                        other => return Err(Error::Invalid(format!("unknown layer kind `{other}`"))),
                    };
                    layers.push(LayerSpec {
                        kind,
                        in_channels: num(parts[1])?,
                        out_channels: num(parts[2])?,
                        dilation: num(parts[3])?,
                        skip_sources: parts[4..].iter().map(|p| num(p)).collect::<Result<_>>()?,
                    });
                }
                other => return Err(Error::Invalid(format!("unknown key `{other}`"))),
            }
        }
        let target = target.ok_or_else(|| Error::Invalid("missing `name`".into()))?;
        let spec = NetworkSpec {
            target,
            input_channels: input_channels.unwrap_or(target.input_channels()),
            width: width.ok_or_else(|| Error::Invalid("missing `width`".into()))?,
            layers,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Convolution kernel weights only: no biases, no batch-norm parameters.
pub fn count_params(spec: &NetworkSpec) -> u64 {
    spec.layers.iter().map(|l| l.kernel_len() as u64).sum()
}

/// One multiply-accumulate per kernel weight per pixel.
pub fn count_flops(spec: &NetworkSpec, height: usize, width: usize) -> u64 {
    count_params(spec) * height as u64 * width as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_parameter_counts() {
        assert_eq!(count_params(&NetworkSpec::default_for(Target::G)), 277_632);
        assert_eq!(count_params(&NetworkSpec::default_for(Target::Gr)), 314_208);
        assert_eq!(count_params(&NetworkSpec::default_for(Target::Gb)), 332_640);
    }

    #[test]
    fn default_shapes() {
        let g = NetworkSpec::default_for(Target::G);
        assert_eq!((g.depth(), g.hidden_units(), g.hidden_dilation()), (32, 30, 1));
        let gr = NetworkSpec::default_for(Target::Gr);
        assert_eq!((gr.depth(), gr.hidden_units(), gr.hidden_dilation()), (31, 34, 3));
        assert_eq!(gr.layers[5].skip_sources, vec![0]);
        assert_eq!(gr.layers[5].in_channels, 64);
        let gb = NetworkSpec::default_for(Target::Gb);
        assert_eq!((gb.depth(), gb.hidden_units()), (33, 36));
        for s in [g, gr, gb] {
            assert!(s.depth() <= MAX_DEPTH);
        }
    }

    #[test]
    fn single_hidden_block_params() {
        let s = NetworkSpec::plain(Target::G, 32, 3, 1).unwrap();
        assert_eq!(s.layers[1].kernel_len(), 9_216);
    }

    #[test]
    fn flops_scale_with_pixels() {
        let g = NetworkSpec::default_for(Target::G);
        assert_eq!(count_flops(&g, 1, 1), count_params(&g));
        assert_eq!(count_flops(&g, 100, 100), 2_776_320_000);
    }

    #[test]
    fn skip_rules_enforced() {
        let early = vec![
            HiddenBlock::plain(),
            HiddenBlock::plain(),
            HiddenBlock::concat(&[2]),
        ];
        assert!(NetworkSpec::build(Target::G, 8, &early, 1).is_err());
        let previous_only = [vec![HiddenBlock::plain(); 5], vec![HiddenBlock::concat(&[1])]].concat();
        assert!(NetworkSpec::build(Target::G, 8, &previous_only, 1).is_err());
        let ok = [vec![HiddenBlock::plain(); 4], vec![HiddenBlock::concat(&[5])]].concat();
        assert!(NetworkSpec::build(Target::G, 8, &ok, 1).is_ok());
        assert!(NetworkSpec::plain(Target::G, 8, 41, 1).is_err());
        assert!(NetworkSpec::plain(Target::G, 8, 5, 2).is_err());
    }

    #[test]
    fn text_round_trip() {
        for t in Target::ALL {
            let s = NetworkSpec::default_for(t);
            assert_eq!(NetworkSpec::from_text(&s.to_text()).unwrap(), s);
        }
        assert!(NetworkSpec::from_text("name = q\nwidth = 4\n").is_err());
    }
}
