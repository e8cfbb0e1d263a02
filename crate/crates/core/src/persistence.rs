//! Versioned text snapshots of an [`EngineState`].
//!
//! ```text
//! BISDSNAP 1
//! dim <d>
//! count <n>
//! k <k>
//! w <w>
//! sim_threshold <t>
//! core_threshold <t>
//! next_id <id>
//! [points]
//! <id> <x1> ... <xd>               one line per point, ascending id
//! [wlists]
//! <owner> <id>:<dist> ...          one line per point, entries in rank order
//! [adjacency]
//! <p> <q> <weight>                 each edge once, p < q, sorted
//! [labels]
//! <id> <label|OUTLIER> <0|1>       cluster label and core flag
//! ```
//!
//! Floats use the shortest representation that parses back to the same bits,
//! so equal states produce byte-identical snapshots.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{Read, Write};

use crate::dataset::{distance, Dataset, PointId};
use crate::error::{Error, Result};
use crate::neighbors::{ExtendedNeighborList, Neighbor};
use crate::snn_graph::{ClusterAssignment, Label, Params, SnnGraph};
use crate::snnd::EngineState;

pub const MAGIC: &str = "BISDSNAP";
pub const VERSION: u32 = 1;

/// Renders the snapshot text for `state`.
pub fn render_snapshot(state: &EngineState) -> String {
    let dataset = state.dataset();
    let params = state.params();
    let mut out = String::with_capacity(dataset.len() * (24 * dataset.dim() + 28 * params.w + 48));

    writeln!(out, "{MAGIC} {VERSION}").unwrap();
    writeln!(out, "dim {}", dataset.dim()).unwrap();
    writeln!(out, "count {}", dataset.len()).unwrap();
    writeln!(out, "k {}", params.k).unwrap();
    writeln!(out, "w {}", params.w).unwrap();
    writeln!(out, "sim_threshold {}", params.sim_threshold).unwrap();
    writeln!(out, "core_threshold {}", params.core_threshold).unwrap();
    writeln!(out, "next_id {}", dataset.next_id()).unwrap();

    out.push_str("[points]\n");
    for point in dataset.iter() {
        write!(out, "{}", point.id).unwrap();
        for c in point.coords {
            write!(out, " {c}").unwrap();
        }
        out.push('\n');
    }

    out.push_str("[wlists]\n");
    for list in state.wlists() {
        write!(out, "{}", list.owner()).unwrap();
        for n in list.entries() {
            write!(out, " {}:{}", n.id, n.distance).unwrap();
        }
        out.push('\n');
    }

    out.push_str("[adjacency]\n");
    for (p, q, weight) in state.graph().edges() {
        writeln!(out, "{p} {q} {weight}").unwrap();
    }

    out.push_str("[labels]\n");
    let assignment = state.assignment();
    for (id, label) in assignment.labels() {
        writeln!(out, "{id} {label} {}", u8::from(assignment.is_core(*id))).unwrap();
    }
    out
}

/// Writes the snapshot to `sink` and returns the number of bytes written.
pub fn save_state(state: &EngineState, mut sink: impl Write) -> Result<u64> {
    let text = render_snapshot(state);
    sink.write_all(text.as_bytes())
        .and_then(|_| sink.flush())
        .map_err(|e| Error::io("writing snapshot", e))?;
    Ok(text.len() as u64)
}

/// Fails unless `requested` equals the parameters the state was built with.
/// Changing parameters requires clustering from scratch.
pub fn check_params(state: &EngineState, requested: &Params) -> Result<()> {
    if state.params() != requested {
        return Err(Error::ParamMismatch {
            snapshot: state.params().to_string(),
            requested: requested.to_string(),
        });
    }
    Ok(())
}

/// Size in bytes of the snapshot `state` would produce.
pub fn snapshot_size(state: &EngineState) -> u64 {
    render_snapshot(state).len() as u64
}

struct Lines<'a> {
    iter: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    section: &'static str,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            iter: text.lines().enumerate().peekable(),
            section: "header",
            last: 0,
        }
    }

    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::corrupt(self.section, line, message)
    }

    fn next(&mut self) -> Result<(usize, &'a str)> {
        match self.iter.next() {
            Some((i, line)) => {
                self.last = i + 1;
                Ok((i + 1, line))
            }
            None => Err(self.err(self.last + 1, "unexpected end of snapshot")),
        }
    }

    fn header<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let (no, line) = self.next()?;
        let value = line
            .strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' '))
            .ok_or_else(|| self.err(no, format!("expected `{key} <value>`")))?;
        value
            .parse()
            .map_err(|_| self.err(no, format!("invalid value for `{key}`: {value:?}")))
    }

    fn section(&mut self, name: &'static str) -> Result<()> {
        let (no, line) = self.next()?;
        if line != format!("[{name}]") {
            return Err(self.err(no, format!("expected section [{name}], found {line:?}")));
        }
        self.section = name;
        Ok(())
    }

    fn at_section_start(&mut self) -> bool {
        matches!(self.iter.peek(), Some((_, line)) if line.starts_with('['))
    }

    fn parse<T: std::str::FromStr>(&self, no: usize, field: &str, what: &str) -> Result<T> {
        field
            .parse()
            .map_err(|_| self.err(no, format!("invalid {what}: {field:?}")))
    }
}

/// Reads a snapshot and re-validates every invariant of the state it holds.
pub fn load_state(mut source: impl Read) -> Result<EngineState> {
    let mut bytes = Vec::new();
    source
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io("reading snapshot", e))?;
    let text = String::from_utf8(bytes).map_err(|_| Error::corrupt("header", 1, "snapshot is not UTF-8"))?;
    parse_snapshot(&text)
}

pub fn parse_snapshot(text: &str) -> Result<EngineState> {
    let mut lines = Lines::new(text);

    let (no, first) = lines.next()?;
    if !text.contains('\n') && format!("{MAGIC} {VERSION}").starts_with(first) {
        return Err(Error::corrupt("header", 1, "snapshot ends inside its first line"));
    }
    let mut magic = first.split(' ');
    if magic.next() != Some(MAGIC) {
        return Err(Error::UnsupportedSnapshot(format!("bad magic at line {no}")));
    }
    match magic.next().map(str::parse::<u32>) {
        Some(Ok(VERSION)) if magic.next().is_none() => {}
        _ => {
            return Err(Error::UnsupportedSnapshot(format!(
                "expected version {VERSION}, found {first:?}"
            )))
        }
    }

    let dim: usize = lines.header("dim")?;
    let count: usize = lines.header("count")?;
    let params = Params {
        k: lines.header("k")?,
        w: lines.header("w")?,
        sim_threshold: lines.header("sim_threshold")?,
        core_threshold: lines.header("core_threshold")?,
    };
    let next_id: PointId = lines.header("next_id")?;
    params
        .validate()
        .and_then(|_| params.check_size(count))
        .map_err(|e| lines.err(lines.last, e.to_string()))?;
    if dim == 0 {
        return Err(lines.err(2, "dimension must be positive"));
    }

    lines.section("points")?;
    let mut ids = Vec::with_capacity(count);
    let mut coords = Vec::with_capacity(count * dim);
    for _ in 0..count {
        let (no, line) = lines.next()?;
        let mut fields = line.split(' ');
        let id: PointId = lines.parse(no, fields.next().unwrap_or(""), "point id")?;
        if ids.last().is_some_and(|last| *last >= id) || id >= next_id {
            return Err(lines.err(no, format!("point id {id} out of order")));
        }
        ids.push(id);
        let before = coords.len();
        for field in fields {
            let value: f64 = lines.parse(no, field, "coordinate")?;
            if !value.is_finite() {
                return Err(lines.err(no, "non-finite coordinate"));
            }
            coords.push(value);
        }
        if coords.len() - before != dim {
            return Err(lines.err(no, format!("expected {dim} coordinates")));
        }
    }
    let dataset = Dataset::from_parts(dim, ids, coords, next_id).map_err(|e| lines.err(lines.last, e.to_string()))?;

    lines.section("wlists")?;
    let mut wlists = Vec::with_capacity(count);
    for index in 0..count {
        let (no, line) = lines.next()?;
        let mut fields = line.split(' ');
        let owner: PointId = lines.parse(no, fields.next().unwrap_or(""), "owner id")?;
        if owner != dataset.id_at(index) {
            return Err(lines.err(no, format!("list owner {owner} does not match point order")));
        }
        let origin = dataset.coords_at(index);
        let mut entries = Vec::with_capacity(params.w);
        for field in fields {
            let (id, dist) = field
                .split_once(':')
                .ok_or_else(|| lines.err(no, format!("malformed entry {field:?}")))?;
            let id: PointId = lines.parse(no, id, "neighbor id")?;
            let dist: f64 = lines.parse(no, dist, "distance")?;
            let other = dataset
                .coords(id)
                .ok_or_else(|| lines.err(no, format!("neighbor {id} is not a stored point")))?;
            if distance(origin, other).to_bits() != dist.to_bits() {
                return Err(lines.err(no, format!("stored distance to {id} does not match coordinates")));
            }
            entries.push(Neighbor::new(id, dist));
        }
        if entries.len() < params.k {
            return Err(lines.err(no, format!("list of {owner} is shorter than k")));
        }
        let list =
            ExtendedNeighborList::from_entries(owner, params.w, entries).map_err(|e| lines.err(no, e.to_string()))?;
        wlists.push(list);
    }

    lines.section("adjacency")?;
    let mut graph = SnnGraph::with_vertices(dataset.ids().iter().copied());
    let mut previous: Option<(PointId, PointId)> = None;
    while !lines.at_section_start() {
        let (no, line) = lines.next()?;
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() != 3 {
            return Err(lines.err(no, "expected `<p> <q> <weight>`"));
        }
        let p: PointId = lines.parse(no, fields[0], "vertex id")?;
        let q: PointId = lines.parse(no, fields[1], "vertex id")?;
        let weight: u32 = lines.parse(no, fields[2], "weight")?;
        if p >= q || previous.is_some_and(|prev| prev >= (p, q)) {
            return Err(lines.err(no, "edges must be listed once, lower id first, in sorted order"));
        }
        if !dataset.contains(p) || !dataset.contains(q) {
            return Err(lines.err(no, "edge endpoint is not a stored point"));
        }
        if (weight as usize) < params.sim_threshold || weight as usize > params.k {
            return Err(lines.err(
                no,
                format!("edge weight {weight} outside [{}, {}]", params.sim_threshold, params.k),
            ));
        }
        graph.set_half(p, q, Some(weight));
        graph.set_half(q, p, Some(weight));
        previous = Some((p, q));
    }

    lines.section("labels")?;
    let mut labels = BTreeMap::new();
    let mut cores = BTreeSet::new();
    let mut label_lines = Vec::with_capacity(count);
    for index in 0..count {
        let (no, line) = lines.next()?;
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() != 3 {
            return Err(lines.err(no, "expected `<id> <label> <core>`"));
        }
        let id: PointId = lines.parse(no, fields[0], "point id")?;
        if id != dataset.id_at(index) {
            return Err(lines.err(no, format!("label for {id} does not match point order")));
        }
        let label: Label = lines.parse(no, fields[1], "label")?;
        let core = match fields[2] {
            "0" => false,
            "1" => true,
            other => return Err(lines.err(no, format!("invalid core flag {other:?}"))),
        };
        if core {
            cores.insert(id);
        }
        labels.insert(id, label);
        label_lines.push(no);
    }
    for ((id, label), no) in labels.iter().zip(label_lines) {
        match label {
            Label::Cluster(target) if !cores.contains(target) => {
                return Err(lines.err(no, format!("label of {id} names {target}, which is not a core")));
            }
            Label::Outlier if cores.contains(id) => {
                return Err(lines.err(no, format!("core point {id} is labeled OUTLIER")));
            }
            _ => {}
        }
    }
    if let Ok((no, line)) = lines.next() {
        if !line.is_empty() {
            return Err(lines.err(no, "trailing content after labels"));
        }
    }
    if !text.ends_with('\n') {
        return Err(lines.err(lines.last, "snapshot does not end with a newline"));
    }

    Ok(EngineState {
        dataset,
        params,
        wlists,
        graph,
        assignment: ClusterAssignment::from_parts(labels, cores),
    })
}
