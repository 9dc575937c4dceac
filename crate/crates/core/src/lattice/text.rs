//! `LATBEAM v1` text format.
//!
//! ```text
//! LATBEAM v1
//! nodes <N> arcs <A> root <R>
//! node <id> <step> <final:0|1> <mass> <suffix>
//! ...                                  (N node records, ids 0..N in order)
//! arc <from> <to> <token> <score> <merged:0|1> <displaced>
//! ...                                  (A arc records)
//! ```
//!
//! `suffix` is a comma-separated list of token ids, or `-` when empty.
//! `displaced` is a number or `-`. Reals are written with 17 significant
//! digits, so a round trip reproduces every score bit for bit.

use super::{Lattice, LatticeArc, LatticeNode};
use crate::error::{Error, Result};

pub const FORMAT_HEADER: &str = "LATBEAM v1";

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn serialize(lattice: &Lattice) -> String {
    let mut s = String::new();
    s.push_str(FORMAT_HEADER);
    s.push('\n');
    s.push_str(&format!("nodes {} arcs {} root {}\n", lattice.nodes.len(), lattice.arcs.len(), lattice.root));
    for n in &lattice.nodes {
        let suffix = if n.suffix.is_empty() {
            "-".to_string()
        } else {
            n.suffix.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
        };
        s.push_str(&format!("node {} {} {} {} {}\n", n.id, n.step, u8::from(n.is_final), real(n.mass), suffix));
    }
    for a in &lattice.arcs {
        let displaced = a.displaced.map(real).unwrap_or_else(|| "-".into());
        s.push_str(&format!(
            "arc {} {} {} {} {} {}\n",
            a.from,
            a.to,
            a.token,
            real(a.score),
            u8::from(a.merged),
            displaced
        ));
    }
    s
}

struct Line<'a> {
    number: usize,
    fields: Vec<&'a str>,
}

impl<'a> Line<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse { line: self.number, message: message.into() }
    }

    fn expect_tag(&self, tag: &str, arity: usize) -> Result<()> {
        if self.fields.first() != Some(&tag) {
            return Err(self.err(format!("expected a `{tag}` record")));
        }
        if self.fields.len() != arity {
            return Err(self.err(format!("`{tag}` record needs {arity} fields, found {}", self.fields.len())));
        }
        Ok(())
    }

    fn int(&self, i: usize, name: &str) -> Result<usize> {
        self.fields[i]
            .parse()
            .map_err(|_| self.err(format!("field {name}: expected an integer, found {:?}", self.fields[i])))
    }

    fn real(&self, i: usize, name: &str) -> Result<f64> {
        let v: f64 = self.fields[i]
            .parse()
            .map_err(|_| self.err(format!("field {name}: expected a real number, found {:?}", self.fields[i])))?;
        if v.is_nan() {
            return Err(self.err(format!("field {name}: NaN is not allowed")));
        }
        Ok(v)
    }

    fn flag(&self, i: usize, name: &str) -> Result<bool> {
        match self.fields[i] {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(self.err(format!("field {name}: expected 0 or 1, found {other:?}"))),
        }
    }
}

pub fn deserialize(text: &str) -> Result<Lattice> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| Line { number: i + 1, fields: l.split_whitespace().collect() })
        .filter(|l| !l.fields.is_empty());

    let header = lines.next().ok_or(Error::Parse { line: 1, message: "empty input".into() })?;
    if header.fields.join(" ") != FORMAT_HEADER {
        return Err(header.err(format!("expected header `{FORMAT_HEADER}`")));
    }
    let counts = lines.next().ok_or(Error::Parse { line: header.number + 1, message: "missing counts line".into() })?;
    if counts.fields.len() != 6
        || counts.fields[0] != "nodes"
        || counts.fields[2] != "arcs"
        || counts.fields[4] != "root"
    {
        return Err(counts.err("expected `nodes <N> arcs <A> root <R>`"));
    }
    let n_nodes = counts.int(1, "nodes")?;
    let n_arcs = counts.int(3, "arcs")?;
    let root = counts.int(5, "root")?;
    if n_nodes == 0 {
        return Err(counts.err("a lattice needs at least the root node"));
    }

    let mut nodes = Vec::with_capacity(n_nodes);
    for i in 0..n_nodes {
        let l = lines
            .next()
            .ok_or(Error::Parse { line: 0, message: format!("expected {n_nodes} node records, found {i}") })?;
        l.expect_tag("node", 6)?;
        let id = l.int(1, "id")?;
        if id != i {
            return Err(l.err(format!("field id: expected {i}, found {id}")));
        }
        let suffix = match l.fields[5] {
            "-" => Vec::new(),
            s => s
                .split(',')
                .map(|t| t.parse().map_err(|_| l.err(format!("field suffix: bad token {t:?}"))))
                .collect::<Result<_>>()?,
        };
        nodes.push(LatticeNode {
            id,
            step: l.int(2, "step")?,
            is_final: l.flag(3, "final")?,
            mass: l.real(4, "mass")?,
            suffix,
        });
    }
    let mut arcs = Vec::with_capacity(n_arcs);
    for i in 0..n_arcs {
        let l = lines
            .next()
            .ok_or(Error::Parse { line: 0, message: format!("expected {n_arcs} arc records, found {i}") })?;
        l.expect_tag("arc", 7)?;
        let displaced = match l.fields[6] {
            "-" => None,
            _ => Some(l.real(6, "displaced")?),
        };
        arcs.push(LatticeArc {
            from: l.int(1, "from")?,
            to: l.int(2, "to")?,
            token: l.int(3, "token")?,
            score: l.real(4, "score")?,
            merged: l.flag(5, "merged")?,
            displaced,
        });
    }
    if let Some(extra) = lines.next() {
        return Err(extra.err("unexpected trailing record"));
    }
    Lattice::from_parts(nodes, arcs, root)
}
