//! Shift-free ReLU networks `W_L ∘ σ ∘ W_{L-1} ∘ σ ∘ … ∘ σ ∘ W_0`
//! whose weights all lie in `{0, ±1/2, ±1, 2}`.
//!
//! There are no shift vectors. Builders that need affine offsets reserve
//! an input channel carrying the constant 1 and keep it alive through
//! every layer. The final layer is linear (no ReLU after `W_L`).

use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::dyadic::Dyadic;
use crate::error::{Error, Result};

/// One of the six admissible weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QuintWeight {
    Zero,
    PlusHalf,
    MinusHalf,
    PlusOne,
    MinusOne,
    Two,
}

impl QuintWeight {
    pub const ALL: [QuintWeight; 6] = [
        QuintWeight::Zero,
        QuintWeight::PlusHalf,
        QuintWeight::MinusHalf,
        QuintWeight::PlusOne,
        QuintWeight::MinusOne,
        QuintWeight::Two,
    ];

    pub fn value(self) -> Dyadic {
        match self {
            QuintWeight::Zero => Dyadic::ZERO,
            QuintWeight::PlusHalf => Dyadic::pow2_inv(1),
            QuintWeight::MinusHalf => -Dyadic::pow2_inv(1),
            QuintWeight::PlusOne => Dyadic::ONE,
            QuintWeight::MinusOne => Dyadic::from_int(-1),
            QuintWeight::Two => Dyadic::from_int(2),
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            QuintWeight::Zero => 0.0,
            QuintWeight::PlusHalf => 0.5,
            QuintWeight::MinusHalf => -0.5,
            QuintWeight::PlusOne => 1.0,
            QuintWeight::MinusOne => -1.0,
            QuintWeight::Two => 2.0,
        }
    }

    /// JSON symbol: `"0"`, `"h"`, `"-h"`, `"1"`, `"-1"`, `"2"`.
    pub fn symbol(self) -> &'static str {
        match self {
            QuintWeight::Zero => "0",
            QuintWeight::PlusHalf => "h",
            QuintWeight::MinusHalf => "-h",
            QuintWeight::PlusOne => "1",
            QuintWeight::MinusOne => "-1",
            QuintWeight::Two => "2",
        }
    }

    pub fn from_symbol(s: &str) -> Option<QuintWeight> {
        QuintWeight::ALL.into_iter().find(|w| w.symbol() == s)
    }

    pub fn from_value(v: &Dyadic) -> Option<QuintWeight> {
        QuintWeight::ALL.into_iter().find(|w| &w.value() == v)
    }

    pub fn is_zero(self) -> bool {
        self == QuintWeight::Zero
    }

    #[inline]
    pub fn apply(self, x: &Dyadic) -> Dyadic {
        match self {
            QuintWeight::Zero => Dyadic::ZERO,
            QuintWeight::PlusHalf => x.half(),
            QuintWeight::MinusHalf => -x.half(),
            QuintWeight::PlusOne => x.clone(),
            QuintWeight::MinusOne => -x,
            QuintWeight::Two => x.double(),
        }
    }
}

/// Dense row-major matrix of weights.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<QuintWeight>,
}

impl WeightMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        WeightMatrix {
            rows,
            cols,
            entries: vec![QuintWeight::Zero; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, QuintWeight::PlusOne);
        }
        m
    }

    /// Panics on ragged rows.
    pub fn from_rows(rows: Vec<Vec<QuintWeight>>) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged matrix rows");
        WeightMatrix {
            rows: rows.len(),
            cols,
            entries: rows.into_iter().flatten().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> QuintWeight {
        self.entries[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, w: QuintWeight) {
        self.entries[r * self.cols + c] = w;
    }

    pub fn row(&self, r: usize) -> &[QuintWeight] {
        &self.entries[r * self.cols..(r + 1) * self.cols]
    }

    pub fn entries(&self) -> &[QuintWeight] {
        &self.entries
    }

    pub fn nonzeros(&self) -> usize {
        self.entries.iter().filter(|w| !w.is_zero()).count()
    }
}

/// Why a network (or raw weight data) is not a valid member of the class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    Empty,
    WidthCount {
        widths: usize,
        matrices: usize,
    },
    Shape {
        layer: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },
    Ragged {
        layer: usize,
        row: usize,
    },
    Alphabet {
        layer: usize,
        row: usize,
        col: usize,
        value: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "network has no weight matrices"),
            Violation::WidthCount { widths, matrices } => {
                write!(f, "{widths} widths for {matrices} matrices (need matrices + 1)")
            }
            Violation::Shape { layer, expected, found } => write!(
                f,
                "matrix {layer} has shape {}x{}, expected {}x{}",
                found.0, found.1, expected.0, expected.1
            ),
            Violation::Ragged { layer, row } => write!(f, "matrix {layer} row {row} has the wrong length"),
            Violation::Alphabet { layer, row, col, value } => write!(
                f,
                "weight {value} at (layer {layer}, row {row}, col {col}) is not in {{0, ±1/2, ±1, 2}}"
            ),
        }
    }
}

impl std::error::Error for Violation {}

type SparseLayer = Vec<Vec<(u32, QuintWeight)>>;

/// A ReLU network over the quintuple alphabet. Immutable once built.
#[derive(Clone)]
pub struct QuintNet {
    widths: Vec<usize>,
    matrices: Vec<WeightMatrix>,
    label: String,
    sparse: OnceLock<Vec<SparseLayer>>,
}

impl PartialEq for QuintNet {
    fn eq(&self, other: &Self) -> bool {
        self.widths == other.widths && self.matrices == other.matrices && self.label == other.label
    }
}

impl Eq for QuintNet {}

impl fmt::Debug for QuintNet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuintNet")
            .field("label", &self.label)
            .field("widths", &self.widths)
            .finish_non_exhaustive()
    }
}

/// Structural statistics. `l0` is the number of nonzero weights, `l1` the
/// sum of their absolute values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetStats {
    pub depth: usize,
    pub max_width: usize,
    pub l0: usize,
    pub l1: Dyadic,
}

impl QuintNet {
    /// Widths are read off the matrix shapes.
    pub fn new(matrices: Vec<WeightMatrix>, label: impl Into<String>) -> Result<Self> {
        let first = matrices.first().ok_or(Violation::Empty)?;
        let mut widths = vec![first.cols()];
        widths.extend(matrices.iter().map(WeightMatrix::rows));
        let net = QuintNet {
            widths,
            matrices,
            label: label.into(),
            sparse: OnceLock::new(),
        };
        net.validate()?;
        Ok(net)
    }

    /// Builds a network from raw dyadic weights, reporting the first entry
    /// outside the alphabet or the first shape inconsistency.
    pub fn from_values(
        widths: Vec<usize>,
        values: &[Vec<Vec<Dyadic>>],
        label: impl Into<String>,
    ) -> Result<Self, Violation> {
        if values.is_empty() {
            return Err(Violation::Empty);
        }
        if widths.len() != values.len() + 1 {
            return Err(Violation::WidthCount {
                widths: widths.len(),
                matrices: values.len(),
            });
        }
        let mut matrices = Vec::with_capacity(values.len());
        for (layer, raw) in values.iter().enumerate() {
            let expected = (widths[layer + 1], widths[layer]);
            let found_cols = raw.first().map_or(widths[layer], Vec::len);
            if raw.len() != expected.0 || found_cols != expected.1 {
                return Err(Violation::Shape {
                    layer,
                    expected,
                    found: (raw.len(), found_cols),
                });
            }
            let mut m = WeightMatrix::zeros(expected.0, expected.1);
            for (row, entries) in raw.iter().enumerate() {
                if entries.len() != expected.1 {
                    return Err(Violation::Ragged { layer, row });
                }
                for (col, v) in entries.iter().enumerate() {
                    let w = QuintWeight::from_value(v).ok_or_else(|| Violation::Alphabet {
                        layer,
                        row,
                        col,
                        value: v.to_string(),
                    })?;
                    m.set(row, col, w);
                }
            }
            matrices.push(m);
        }
        Ok(QuintNet {
            widths,
            matrices,
            label: label.into(),
            sparse: OnceLock::new(),
        })
    }

    /// Single identity matrix: no hidden layer.
    pub fn identity(width: usize) -> Self {
        Self::new(vec![WeightMatrix::identity(width)], "identity").expect("identity is well formed")
    }

    /// Checks that matrix shapes chain through the width vector. Entries are
    /// alphabet members by type; raw data is checked by [`QuintNet::from_values`].
    pub fn validate(&self) -> Result<(), Violation> {
        if self.matrices.is_empty() {
            return Err(Violation::Empty);
        }
        if self.widths.len() != self.matrices.len() + 1 {
            return Err(Violation::WidthCount {
                widths: self.widths.len(),
                matrices: self.matrices.len(),
            });
        }
        for (layer, m) in self.matrices.iter().enumerate() {
            let expected = (self.widths[layer + 1], self.widths[layer]);
            if (m.rows(), m.cols()) != expected {
                return Err(Violation::Shape {
                    layer,
                    expected,
                    found: (m.rows(), m.cols()),
                });
            }
        }
        Ok(())
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn matrices(&self) -> &[WeightMatrix] {
        &self.matrices
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Number of hidden layers.
    pub fn depth(&self) -> usize {
        self.matrices.len() - 1
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("non-empty widths")
    }

    pub fn stats(&self) -> NetStats {
        let mut l0 = 0;
        // l1 in units of 1/2.
        let mut halves: u64 = 0;
        for w in self.matrices.iter().flat_map(|m| m.entries()) {
            match w {
                QuintWeight::Zero => continue,
                QuintWeight::PlusHalf | QuintWeight::MinusHalf => halves += 1,
                QuintWeight::PlusOne | QuintWeight::MinusOne => halves += 2,
                QuintWeight::Two => halves += 4,
            }
            l0 += 1;
        }
        NetStats {
            depth: self.depth(),
            max_width: self.widths.iter().copied().max().unwrap_or(0),
            l0,
            l1: Dyadic::new(halves, 1),
        }
    }

    /// Set of weights that actually occur.
    pub fn alphabet(&self) -> BTreeSet<QuintWeight> {
        self.matrices.iter().flat_map(|m| m.entries().iter().copied()).collect()
    }

    fn sparse(&self) -> &[SparseLayer] {
        self.sparse.get_or_init(|| {
            self.matrices
                .iter()
                .map(|m| {
                    (0..m.rows())
                        .map(|r| {
                            m.row(r)
                                .iter()
                                .enumerate()
                                .filter(|(_, w)| !w.is_zero())
                                .map(|(c, w)| (c as u32, *w))
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_width() {
            return Err(Error::Dimension {
                expected: self.input_width(),
                found: len,
            });
        }
        Ok(())
    }

    /// Exact evaluation over dyadic rationals.
    pub fn eval_exact(&self, x: &[Dyadic]) -> Result<Vec<Dyadic>> {
        self.check_input(x.len())?;
        let layers = self.sparse();
        let mut cur: Vec<Dyadic> = x.to_vec();
        for (i, layer) in layers.iter().enumerate() {
            let last = i + 1 == layers.len();
            cur = layer
                .iter()
                .map(|row| {
                    let mut acc = Dyadic::ZERO;
                    for &(c, w) in row {
                        acc += w.apply(&cur[c as usize]);
                    }
                    if last {
                        acc
                    } else {
                        acc.relu()
                    }
                })
                .collect();
        }
        Ok(cur)
    }

    /// The same pipeline in binary64.
    pub fn eval_float(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x.len())?;
        let layers = self.sparse();
        let mut cur: Vec<f64> = x.to_vec();
        for (i, layer) in layers.iter().enumerate() {
            let last = i + 1 == layers.len();
            cur = layer
                .iter()
                .map(|row| {
                    let acc: f64 = row.iter().map(|&(c, w)| w.as_f64() * cur[c as usize]).sum();
                    if last {
                        acc
                    } else {
                        acc.max(0.0)
                    }
                })
                .collect();
        }
        Ok(cur)
    }

    /// `second ∘ σ ∘ first`; depth is `depth(first) + depth(second) + 1`.
    pub fn compose(first: &QuintNet, second: &QuintNet) -> Result<QuintNet> {
        if first.output_width() != second.input_width() {
            return Err(Error::Width(format!(
                "cannot compose: first emits {} channels, second expects {}",
                first.output_width(),
                second.input_width()
            )));
        }
        let matrices = first.matrices.iter().chain(&second.matrices).cloned().collect();
        QuintNet::new(matrices, format!("{}>{}", first.label, second.label))
    }

    /// Appends `extra` hidden layers of identity channels. Preserves the
    /// output only where it is nonnegative (negative outputs become 0).
    pub fn extend_depth(&self, extra: usize) -> QuintNet {
        let mut out = self.clone();
        let w = self.output_width();
        out.matrices.extend((0..extra).map(|_| WeightMatrix::identity(w)));
        out.widths.extend(std::iter::repeat_n(w, extra));
        out.sparse = OnceLock::new();
        out
    }

    /// Side-by-side networks of equal depth. With `shared_input` every
    /// component reads the same input vector; otherwise inputs are
    /// concatenated. Outputs are concatenated in order.
    pub fn parallel(nets: &[QuintNet], shared_input: bool) -> Result<QuintNet> {
        let first = nets
            .first()
            .ok_or_else(|| Error::Width("parallel of zero networks".into()))?;
        if shared_input {
            let p0 = first.input_width();
            if let Some(bad) = nets.iter().find(|n| n.input_width() != p0) {
                return Err(Error::Width(format!(
                    "shared input needs equal input widths ({p0} vs {})",
                    bad.input_width()
                )));
            }
            let routes: Vec<Vec<usize>> = nets.iter().map(|_| (0..p0).collect()).collect();
            let parts: Vec<(&QuintNet, &[usize])> = nets.iter().zip(&routes).map(|(n, r)| (n, r.as_slice())).collect();
            Self::parallel_routed(p0, &parts)
        } else {
            let mut offset = 0;
            let routes: Vec<Vec<usize>> = nets
                .iter()
                .map(|n| {
                    let r = (offset..offset + n.input_width()).collect();
                    offset += n.input_width();
                    r
                })
                .collect();
            let parts: Vec<(&QuintNet, &[usize])> = nets.iter().zip(&routes).map(|(n, r)| (n, r.as_slice())).collect();
            Self::parallel_routed(offset, &parts)
        }
    }

    /// Side-by-side networks of equal depth reading chosen channels of a
    /// shared input vector. `route[j]` is the input channel feeding the
    /// part's j-th input; channels may not repeat within one part.
    pub fn parallel_routed(input_width: usize, parts: &[(&QuintNet, &[usize])]) -> Result<QuintNet> {
        let Some((first, _)) = parts.first() else {
            return Err(Error::Width("parallel of zero networks".into()));
        };
        let depth = first.depth();
        for (net, route) in parts {
            if net.depth() != depth {
                return Err(Error::Depth(format!(
                    "parallel components have depths {depth} and {} ({})",
                    net.depth(),
                    net.label
                )));
            }
            if route.len() != net.input_width() {
                return Err(Error::Width(format!(
                    "route has {} channels, network '{}' expects {}",
                    route.len(),
                    net.label,
                    net.input_width()
                )));
            }
            let mut seen = BTreeSet::new();
            for &c in *route {
                if c >= input_width || !seen.insert(c) {
                    return Err(Error::Width(format!(
                        "bad route channel {c} for input width {input_width}"
                    )));
                }
            }
        }
        let mut matrices = Vec::with_capacity(depth + 1);
        for layer in 0..=depth {
            let rows: usize = parts.iter().map(|(n, _)| n.matrices[layer].rows()).sum();
            let cols = if layer == 0 {
                input_width
            } else {
                parts.iter().map(|(n, _)| n.matrices[layer].cols()).sum()
            };
            let mut m = WeightMatrix::zeros(rows, cols);
            let (mut r0, mut c0) = (0, 0);
            for (net, route) in parts {
                let sub = &net.matrices[layer];
                for r in 0..sub.rows() {
                    for c in 0..sub.cols() {
                        let w = sub.get(r, c);
                        if w.is_zero() {
                            continue;
                        }
                        let col = if layer == 0 { route[c] } else { c0 + c };
                        m.set(r0 + r, col, w);
                    }
                }
                r0 += sub.rows();
                c0 += sub.cols();
            }
            matrices.push(m);
        }
        let label = parts
            .iter()
            .map(|(n, _)| n.label.as_str())
            .collect::<Vec<_>>()
            .join("|");
        QuintNet::new(matrices, format!("[{label}]"))
    }

    pub fn to_document(&self) -> NetDocument {
        NetDocument {
            version: 1,
            widths: self.widths.clone(),
            label: self.label.clone(),
            matrices: self
                .matrices
                .iter()
                .map(|m| {
                    (0..m.rows())
                        .map(|r| m.row(r).iter().map(|w| w.symbol().to_string()).collect())
                        .collect()
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("network document serializes")
    }

    pub fn from_json(s: &str) -> Result<QuintNet> {
        let doc: NetDocument = serde_json::from_str(s)?;
        QuintNet::from_document(doc)
    }

    pub fn from_document(doc: NetDocument) -> Result<QuintNet> {
        if doc.version != 1 {
            return Err(Error::Schema(format!("unsupported version {}", doc.version)));
        }
        if doc.matrices.is_empty() {
            return Err(Error::Schema("empty matrix list".into()));
        }
        if doc.widths.len() != doc.matrices.len() + 1 {
            return Err(Error::Schema(format!(
                "{} widths for {} matrices",
                doc.widths.len(),
                doc.matrices.len()
            )));
        }
        let mut matrices = Vec::with_capacity(doc.matrices.len());
        for (layer, raw) in doc.matrices.iter().enumerate() {
            let (rows, cols) = (doc.widths[layer + 1], doc.widths[layer]);
            if raw.len() != rows || raw.iter().any(|r| r.len() != cols) {
                return Err(Error::Schema(format!("matrix {layer} is not {rows}x{cols}")));
            }
            let mut m = WeightMatrix::zeros(rows, cols);
            for (r, entries) in raw.iter().enumerate() {
                for (c, sym) in entries.iter().enumerate() {
                    let w = QuintWeight::from_symbol(sym).ok_or_else(|| {
                        Error::Invalid(Violation::Alphabet {
                            layer,
                            row: r,
                            col: c,
                            value: sym.clone(),
                        })
                    })?;
                    m.set(r, c, w);
                }
            }
            matrices.push(m);
        }
        QuintNet::new(matrices, doc.label)
    }
}

/// On-disk JSON form: `{version, widths, label, matrices}` with row-major
/// matrices of weight symbols.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct NetDocument {
    pub version: u32,
    pub widths: Vec<usize>,
    pub label: String,
    pub matrices: Vec<Vec<Vec<String>>>,
}

/// Incrementally assembles one network stage out of routed parallel
/// parts. Parts shallower than the deepest one are padded with identity
/// layers, so every part must produce nonnegative outputs (or outputs whose
/// ReLU is the intended value).
pub struct StageBuilder {
    input_width: usize,
    parts: Vec<(QuintNet, Vec<usize>)>,
    outputs: usize,
}

impl StageBuilder {
    pub fn new(input_width: usize) -> Self {
        StageBuilder {
            input_width,
            parts: Vec::new(),
            outputs: 0,
        }
    }

    /// Adds a part; returns the stage output indices of its outputs.
    pub fn part(&mut self, net: QuintNet, route: Vec<usize>) -> std::ops::Range<usize> {
        let start = self.outputs;
        self.outputs += net.output_width();
        self.parts.push((net, route));
        start..self.outputs
    }

    /// Carries one input channel through unchanged.
    pub fn carry(&mut self, channel: usize) -> usize {
        self.part(QuintNet::identity(1).with_label("carry"), vec![channel])
            .start
    }

    pub fn output_width(&self) -> usize {
        self.outputs
    }

    pub fn build(self) -> Result<QuintNet> {
        let depth = self.parts.iter().map(|(n, _)| n.depth()).max().unwrap_or(0);
        let padded: Vec<(QuintNet, Vec<usize>)> = self
            .parts
            .into_iter()
            .map(|(n, r)| {
                let extra = depth - n.depth();
                (n.extend_depth(extra), r)
            })
            .collect();
        let refs: Vec<(&QuintNet, &[usize])> = padded.iter().map(|(n, r)| (n, r.as_slice())).collect();
        QuintNet::parallel_routed(self.input_width, &refs)
    }
}
