//! Plain-text problem files.
//!
//! Every file starts with a header line naming the format and its counts;
//! records follow, one per line. `#` starts a comment line and blank lines
//! are ignored. Numbers are decimal text; floats are written in Rust's
//! shortest round-trip form, so `parse(write(p)) == p` exactly.
//!
//! ```text
//! mrf <vertices> <edges>
//! v <id> <card> <psi_0> .. <psi_card-1>
//! e <u> <v> <axis> <row-major card(u) x card(v) potential>
//!
//! bipartite <noun phrases> <contexts> <classes> <edges> <seeds>
//! e <np> <ct> <weight>
//! s <vertex> <class>
//!
//! lasso <observations> <features> <nonzeros>
//! y <j> <y_j>
//! x <i> <j> <X_ij>
//! ```

use std::fmt::Write as _;
use std::str::FromStr;

use graphlab_algorithms::coem::CoemProblem;
use graphlab_algorithms::lasso::LassoProblem;
use graphlab_algorithms::{Matrix, MrfEdge, PairwiseMrf};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: {msg}")]
    Range { line: usize, msg: String },
    #[error("declared {declared} {what}, found {found}")]
    CountMismatch { what: &'static str, declared: usize, found: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Mrf,
    Bipartite,
    Lasso,
}

impl Format {
    pub fn tag(self) -> &'static str {
        match self {
            Format::Mrf => "mrf",
            Format::Bipartite => "bipartite",
            Format::Lasso => "lasso",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Problem {
    Mrf(PairwiseMrf),
    Bipartite(CoemProblem),
    Lasso(LassoProblem),
}

impl Problem {
    pub fn format(&self) -> Format {
        match self {
            Problem::Mrf(_) => Format::Mrf,
            Problem::Bipartite(_) => Format::Bipartite,
            Problem::Lasso(_) => Format::Lasso,
        }
    }

    /// Parses any of the three formats, chosen by the header tag.
    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let mut lines = Lines::new(text);
        let (no, head) = lines.next().ok_or(FormatError::Parse { line: 1, msg: "empty file".into() })?;
        match head[0] {
            "mrf" => parse_mrf(no, &head, lines).map(Problem::Mrf),
            "bipartite" => parse_bipartite(no, &head, lines).map(Problem::Bipartite),
            "lasso" => parse_lasso(no, &head, lines).map(Problem::Lasso),
            other => Err(FormatError::Parse { line: no, msg: format!("unknown format {other:?}") }),
        }
    }

    pub fn write(&self) -> String {
        match self {
            Problem::Mrf(m) => write_mrf(m),
            Problem::Bipartite(b) => write_bipartite(b),
            Problem::Lasso(l) => write_lasso(l),
        }
    }
}

/// Non-empty, non-comment lines split on whitespace, with 1-based numbers.
struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines { inner: text.lines().enumerate() }
    }
}

impl<'a> Iterator for Lines<'a> {
    type Item = (usize, Vec<&'a str>);

    fn next(&mut self) -> Option<Self::Item> {
        for (i, line) in self.inner.by_ref() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            return Some((i + 1, t.split_whitespace().collect()));
        }
        None
    }
}

fn field<T: FromStr>(line: usize, tokens: &[&str], i: usize, what: &str) -> Result<T, FormatError> {
    let tok = tokens.get(i).ok_or_else(|| FormatError::Parse { line, msg: format!("missing {what}") })?;
    tok.parse().map_err(|_| FormatError::Parse { line, msg: format!("bad {what} {tok:?}") })
}

fn arity(line: usize, tokens: &[&str], n: usize) -> Result<(), FormatError> {
    if tokens.len() != n {
        return Err(FormatError::Parse { line, msg: format!("expected {n} fields, found {}", tokens.len()) });
    }
    Ok(())
}

fn index(line: usize, tokens: &[&str], i: usize, what: &str, bound: usize) -> Result<usize, FormatError> {
    let x: usize = field(line, tokens, i, what)?;
    if x >= bound {
        return Err(FormatError::Range { line, msg: format!("{what} {x} out of range 0..{bound}") });
    }
    Ok(x)
}

fn floats(line: usize, tokens: &[&str], from: usize, what: &str) -> Result<Vec<f64>, FormatError> {
    (from..tokens.len()).map(|i| field(line, tokens, i, what)).collect()
}

fn check_count(what: &'static str, declared: usize, found: usize) -> Result<(), FormatError> {
    if declared != found {
        return Err(FormatError::CountMismatch { what, declared, found });
    }
    Ok(())
}

fn parse_mrf(no: usize, head: &[&str], lines: Lines<'_>) -> Result<PairwiseMrf, FormatError> {
    arity(no, head, 3)?;
    let nv: usize = field(no, head, 1, "vertex count")?;
    let ne: usize = field(no, head, 2, "edge count")?;
    let mut potentials: Vec<Option<Vec<f64>>> = vec![None; nv];
    let mut raw_edges = Vec::new();
    let mut n_vertex_lines = 0;
    for (line, t) in lines {
        match t[0] {
            "v" => {
                let id = index(line, &t, 1, "vertex", nv)?;
                let card: usize = field(line, &t, 2, "cardinality")?;
                arity(line, &t, 3 + card)?;
                if card == 0 {
                    return Err(FormatError::Range { line, msg: "cardinality must be positive".into() });
                }
                if potentials[id].is_some() {
                    return Err(FormatError::Parse { line, msg: format!("vertex {id} defined twice") });
                }
                potentials[id] = Some(floats(line, &t, 3, "potential")?);
                n_vertex_lines += 1;
            }
            "e" => raw_edges.push((line, t)),
            other => return Err(FormatError::Parse { line, msg: format!("unknown record {other:?}") }),
        }
    }
    check_count("vertices", nv, n_vertex_lines)?;
    check_count("edges", ne, raw_edges.len())?;
    let mut mrf = PairwiseMrf::new();
    for p in potentials {
        mrf.add_variable(p.expect("all vertices counted"));
    }
    for (line, t) in raw_edges {
        let u = index(line, &t, 1, "vertex", nv)?;
        let v = index(line, &t, 2, "vertex", nv)?;
        let axis: u8 = field(line, &t, 3, "axis")?;
        if axis > 2 {
            return Err(FormatError::Range { line, msg: format!("axis {axis} out of range 0..3") });
        }
        let (ku, kv) = (mrf.cards[u], mrf.cards[v]);
        arity(line, &t, 4 + ku * kv)?;
        let m = Matrix::new(ku, kv, floats(line, &t, 4, "potential")?).expect("arity checked");
        mrf.edges.push(MrfEdge { u, v, axis, potential: m });
    }
    Ok(mrf)
}

fn write_mrf(m: &PairwiseMrf) -> String {
    let mut s = format!("mrf {} {}\n", m.num_vertices(), m.edges.len());
    for (i, p) in m.node_potentials.iter().enumerate() {
        let _ = write!(s, "v {i} {}", p.len());
        for x in p {
            let _ = write!(s, " {x}");
        }
        s.push('\n');
    }
    for e in &m.edges {
        let _ = write!(s, "e {} {} {}", e.u, e.v, e.axis);
        for x in e.potential.data() {
            let _ = write!(s, " {x}");
        }
        s.push('\n');
    }
    s
}

fn parse_bipartite(no: usize, head: &[&str], lines: Lines<'_>) -> Result<CoemProblem, FormatError> {
    arity(no, head, 6)?;
    let n_np: usize = field(no, head, 1, "noun phrase count")?;
    let n_ct: usize = field(no, head, 2, "context count")?;
    let n_classes: usize = field(no, head, 3, "class count")?;
    let ne: usize = field(no, head, 4, "edge count")?;
    let ns: usize = field(no, head, 5, "seed count")?;
    if n_classes == 0 {
        return Err(FormatError::Range { line: no, msg: "class count must be positive".into() });
    }
    let mut p = CoemProblem { n_np, n_ct, n_classes, edges: Vec::new(), seeds: Vec::new() };
    for (line, t) in lines {
        match t[0] {
            "e" => {
                arity(line, &t, 4)?;
                let np = index(line, &t, 1, "noun phrase", n_np)?;
                let ct = index(line, &t, 2, "context", n_ct)?;
                let w: f64 = field(line, &t, 3, "weight")?;
                if !(w >= 0.0 && w.is_finite()) {
                    return Err(FormatError::Range {
                        line,
                        msg: format!("weight {w} must be finite and non-negative"),
                    });
                }
                p.edges.push((np, ct, w));
            }
            "s" => {
                arity(line, &t, 3)?;
                let v = index(line, &t, 1, "vertex", n_np + n_ct)?;
                let c = index(line, &t, 2, "class", n_classes)?;
                p.seeds.push((v, c));
            }
            other => return Err(FormatError::Parse { line, msg: format!("unknown record {other:?}") }),
        }
    }
    check_count("edges", ne, p.edges.len())?;
    check_count("seeds", ns, p.seeds.len())?;
    Ok(p)
}

fn write_bipartite(p: &CoemProblem) -> String {
    let mut s = format!("bipartite {} {} {} {} {}\n", p.n_np, p.n_ct, p.n_classes, p.edges.len(), p.seeds.len());
    for &(np, ct, w) in &p.edges {
        let _ = writeln!(s, "e {np} {ct} {w}");
    }
    for &(v, c) in &p.seeds {
        let _ = writeln!(s, "s {v} {c}");
    }
    s
}

fn parse_lasso(no: usize, head: &[&str], lines: Lines<'_>) -> Result<LassoProblem, FormatError> {
    arity(no, head, 4)?;
    let n_obs: usize = field(no, head, 1, "observation count")?;
    let n_features: usize = field(no, head, 2, "feature count")?;
    let nnz: usize = field(no, head, 3, "nonzero count")?;
    let mut y: Vec<Option<f64>> = vec![None; n_obs];
    let mut n_y = 0;
    let mut entries = Vec::new();
    for (line, t) in lines {
        match t[0] {
            "y" => {
                arity(line, &t, 3)?;
                let j = index(line, &t, 1, "observation", n_obs)?;
                if y[j].is_some() {
                    return Err(FormatError::Parse { line, msg: format!("observation {j} defined twice") });
                }
                y[j] = Some(field(line, &t, 2, "target")?);
                n_y += 1;
            }
            "x" => {
                arity(line, &t, 4)?;
                let i = index(line, &t, 1, "feature", n_features)?;
                let j = index(line, &t, 2, "observation", n_obs)?;
                entries.push((i, j, field(line, &t, 3, "entry")?));
            }
            other => return Err(FormatError::Parse { line, msg: format!("unknown record {other:?}") }),
        }
    }
    check_count("observations", n_obs, n_y)?;
    check_count("nonzeros", nnz, entries.len())?;
    let y = y.into_iter().map(|v| v.expect("all observations counted")).collect();
    Ok(LassoProblem { n_features, n_obs, y, entries })
}

fn write_lasso(p: &LassoProblem) -> String {
    let mut s = format!("lasso {} {} {}\n", p.n_obs, p.n_features, p.entries.len());
    for (j, y) in p.y.iter().enumerate() {
        let _ = writeln!(s, "y {j} {y}");
    }
    for &(i, j, x) in &p.entries {
        let _ = writeln!(s, "x {i} {j} {x}");
    }
    s
}
