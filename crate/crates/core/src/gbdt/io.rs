//! Flat text model format.
//!
//! ```text
//! synthstation-gbdt 1
//! config num_leaves=31 min_data_in_leaf=20 ...
//! schema_hash 0123abcd...
//! base_score -3.2
//! learning_rate 0.1
//! best_iteration 57
//! columns 2
//! Meteorology met_t2m
//! ...
//! features 2 max_bin 255
//! cuts 0 0.5 1.5 2.5
//! ...
//! trees 80
//! tree_id,node_id,kind,feature,bin_threshold,default_dir,left,right,value,count
//! 0,0,split,3,17,left,1,2,,1200
//! 0,1,leaf,,,,,,0.0123,600
//! ```
//!
//! Floats are written in shortest round-trip form, so a saved model reads
//! back bit-identical.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::tree::{Node, Tree};
use super::{BinMapper, Ensemble, TrainConfig};
use crate::error::{Error, Result};
use crate::ingest::FeatureColumn;

const MAGIC: &str = "synthstation-gbdt";
const VERSION: u32 = 1;
const NODE_HEADER: &str = "tree_id,node_id,kind,feature,bin_threshold,default_dir,left,right,value,count";

fn config_line(c: &TrainConfig) -> String {
    format!(
        "config num_leaves={} min_data_in_leaf={} l2_lambda={} learning_rate={} max_bin={} \
         early_stopping_rounds={} goss_top_rate={} goss_other_rate={} max_trees={} min_split_gain={} seed={}",
        c.num_leaves,
        c.min_data_in_leaf,
        c.l2_lambda,
        c.learning_rate,
        c.max_bin,
        c.early_stopping_rounds,
        c.goss_top_rate,
        c.goss_other_rate,
        c.max_trees,
        c.min_split_gain,
        c.seed
    )
}

pub fn write_model<W: Write>(m: &Ensemble, mut w: W) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("{MAGIC} {VERSION}\n"));
    out.push_str(&config_line(&m.config));
    out.push('\n');
    out.push_str(&format!("schema_hash {}\n", m.schema_hash()));
    out.push_str(&format!("base_score {}\n", m.base_score));
    out.push_str(&format!("learning_rate {}\n", m.learning_rate));
    out.push_str(&format!("best_iteration {}\n", m.best_iteration));
    out.push_str(&format!("columns {}\n", m.columns.len()));
    for c in &m.columns {
        out.push_str(&format!("{} {}\n", c.family.as_str(), c.name));
    }
    out.push_str(&format!("features {} max_bin {}\n", m.mapper.n_features(), m.mapper.max_bin()));
    for f in 0..m.mapper.n_features() {
        out.push_str(&format!("cuts {f}"));
        for c in m.mapper.cuts(f) {
            out.push_str(&format!(" {c}"));
        }
        out.push('\n');
    }
    out.push_str(&format!("trees {}\n{NODE_HEADER}\n", m.trees.len()));
    for (t, tree) in m.trees.iter().enumerate() {
        for (i, node) in tree.nodes.iter().enumerate() {
            match node {
                Node::Split {
                    feature,
                    bin,
                    default_left,
                    left,
                    right,
                    count,
                    ..
                } => {
                    let dir = if *default_left { "left" } else { "right" };
                    out.push_str(&format!("{t},{i},split,{feature},{bin},{dir},{left},{right},,{count}\n"));
                }
                Node::Leaf { value, count } => {
                    out.push_str(&format!("{t},{i},leaf,,,,,,{value},{count}\n"));
                }
            }
        }
    }
    w.write_all(out.as_bytes()).map_err(|e| Error::io("<model>", e))?;
    Ok(())
}

struct Lines<'a, R> {
    inner: std::io::Lines<R>,
    line: usize,
    source: &'a str,
}

impl<R: BufRead> Lines<'_, R> {
    fn next(&mut self) -> Result<String> {
        self.line += 1;
        match self.inner.next() {
            Some(Ok(l)) => Ok(l),
            Some(Err(e)) => Err(Error::io(self.source, e)),
            None => Err(self.err("unexpected end of model")),
        }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.source.to_string(),
            line: self.line,
            message: message.into(),
        }
    }

    fn keyed(&mut self, key: &str) -> Result<String> {
        let l = self.next()?;
        match l.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.to_string()),
            _ => Err(self.err(format!("expected `{key} ...`"))),
        }
    }

    fn parse<T: std::str::FromStr>(&self, s: &str, what: &str) -> Result<T> {
        s.trim().parse().map_err(|_| self.err(format!("bad {what} `{s}`")))
    }
}

fn parse_config<R: BufRead>(lines: &Lines<'_, R>, body: &str) -> Result<TrainConfig> {
    let mut c = TrainConfig::default();
    for kv in body.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| lines.err(format!("bad config entry `{kv}`")))?;
        match k {
            "num_leaves" => c.num_leaves = lines.parse(v, k)?,
            "min_data_in_leaf" => c.min_data_in_leaf = lines.parse(v, k)?,
            "l2_lambda" => c.l2_lambda = lines.parse(v, k)?,
            "learning_rate" => c.learning_rate = lines.parse(v, k)?,
            "max_bin" => c.max_bin = lines.parse(v, k)?,
            "early_stopping_rounds" => c.early_stopping_rounds = lines.parse(v, k)?,
            "goss_top_rate" => c.goss_top_rate = lines.parse(v, k)?,
            "goss_other_rate" => c.goss_other_rate = lines.parse(v, k)?,
            "max_trees" => c.max_trees = lines.parse(v, k)?,
            "min_split_gain" => c.min_split_gain = lines.parse(v, k)?,
            "seed" => c.seed = lines.parse(v, k)?,
            _ => return Err(lines.err(format!("unknown config key `{k}`"))),
        }
    }
    Ok(c)
}

/// Reads a model written by [`write_model`]; `source` names it in errors.
pub fn read_model<R: BufRead>(r: R, source: &str) -> Result<Ensemble> {
    let mut lines = Lines {
        inner: r.lines(),
        line: 0,
        source,
    };
    let head = lines.next()?;
    if head != format!("{MAGIC} {VERSION}") {
        return Err(lines.err(format!("not a version {VERSION} model file")));
    }
    let body = lines.keyed("config")?;
    let config = parse_config(&lines, &body)?;
    let hash = lines.keyed("schema_hash")?;
    let v = lines.keyed("base_score")?;
    let base_score: f64 = lines.parse(&v, "base_score")?;
    let v = lines.keyed("learning_rate")?;
    let learning_rate: f64 = lines.parse(&v, "learning_rate")?;
    let v = lines.keyed("best_iteration")?;
    let best_iteration: usize = lines.parse(&v, "best_iteration")?;

    let v = lines.keyed("columns")?;
    let n_columns: usize = lines.parse(&v, "column count")?;
    let mut columns = Vec::with_capacity(n_columns);
    for _ in 0..n_columns {
        let l = lines.next()?;
        let (fam, name) = l.split_once(' ').ok_or_else(|| lines.err("expected `<family> <name>`"))?;
        let family = fam.parse().map_err(|_| lines.err(format!("unknown family `{fam}`")))?;
        columns.push(FeatureColumn {
            family,
            name: name.to_string(),
        });
    }

    let v = lines.keyed("features")?;
    let parts: Vec<&str> = v.split_whitespace().collect();
    if parts.len() != 3 || parts[1] != "max_bin" {
        return Err(lines.err("expected `features <n> max_bin <m>`"));
    }
    let n_features: usize = lines.parse(parts[0], "feature count")?;
    let max_bin: usize = lines.parse(parts[2], "max_bin")?;
    let mut cuts = Vec::with_capacity(n_features);
    for f in 0..n_features {
        let v = lines.keyed("cuts")?;
        let mut it = v.split_whitespace();
        let idx: usize = lines.parse(it.next().unwrap_or(""), "feature index")?;
        if idx != f {
            return Err(lines.err(format!("expected cuts for feature {f}")));
        }
        cuts.push(it.map(|c| lines.parse::<f64>(c, "cut")).collect::<Result<Vec<_>>>()?);
    }
    let mapper = BinMapper::from_cuts(cuts, max_bin).map_err(|e| lines.err(e.to_string()))?;

    let v = lines.keyed("trees")?;
    let n_trees: usize = lines.parse(&v, "tree count")?;
    if lines.next()? != NODE_HEADER {
        return Err(lines.err("missing node header"));
    }
    let mut trees: Vec<Tree> = (0..n_trees).map(|_| Tree { nodes: Vec::new() }).collect();
    loop {
        let l = match lines.inner.next() {
            None => break,
            Some(l) => l.map_err(|e| Error::io(source, e))?,
        };
        lines.line += 1;
        if l.is_empty() {
            continue;
        }
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 10 {
            return Err(lines.err("node line needs 10 fields"));
        }
        let t: usize = lines.parse(f[0], "tree id")?;
        let id: usize = lines.parse(f[1], "node id")?;
        let tree = trees.get_mut(t).ok_or_else(|| lines.err(format!("tree {t} out of range")))?;
        if id != tree.nodes.len() {
            return Err(lines.err(format!("node {id} out of order")));
        }
        let count: u32 = lines.parse(f[9], "count")?;
        let node = match f[2] {
            "leaf" => Node::Leaf {
                value: lines.parse(f[8], "leaf value")?,
                count,
            },
            "split" => {
                let feature: usize = lines.parse(f[3], "feature")?;
                if feature >= n_features {
                    return Err(lines.err(format!("feature {feature} out of range")));
                }
                let bin: usize = lines.parse(f[4], "bin threshold")?;
                let default_left = match f[5] {
                    "left" => true,
                    "right" => false,
                    other => return Err(lines.err(format!("bad default direction `{other}`"))),
                };
                Node::Split {
                    feature,
                    bin,
                    threshold: mapper.threshold_value(feature, bin),
                    default_left,
                    left: lines.parse(f[6], "left child")?,
                    right: lines.parse(f[7], "right child")?,
                    count,
                }
            }
            other => return Err(lines.err(format!("unknown node kind `{other}`"))),
        };
        tree.nodes.push(node);
    }
    for (t, tree) in trees.iter().enumerate() {
        let n = tree.nodes.len();
        let children_ok = tree.nodes.iter().enumerate().all(|(i, node)| match node {
            Node::Split { left, right, .. } => *left > i && *right > i && *left < n && *right < n,
            Node::Leaf { .. } => true,
        });
        if n == 0 || !children_ok {
            return Err(lines.err(format!("tree {t} is malformed")));
        }
    }
    if best_iteration > n_trees {
        return Err(lines.err("best_iteration exceeds tree count"));
    }

    let m = Ensemble {
        trees,
        learning_rate,
        base_score,
        best_iteration,
        mapper,
        config,
        columns: Vec::new(),
        train_loss: Vec::new(),
        valid_loss: Vec::new(),
    };
    let m = if n_columns > 0 { m.with_columns(columns)? } else { m };
    if m.schema_hash() != hash {
        return Err(lines.err("schema hash does not match the column list"));
    }
    Ok(m)
}

impl Ensemble {
    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        write_model(self, &mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("model text is utf-8")
    }

    pub fn from_text(text: &str) -> Result<Ensemble> {
        read_model(text.as_bytes(), "<model>")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        w.write_all(self.to_text().as_bytes()).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Ensemble> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        read_model(BufReader::new(f), &path.display().to_string())
    }
}
