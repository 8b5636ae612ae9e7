//! Plain-text domain manifest: one tab-separated row per sample,
//!
//! ```text
//! path	class	domain	split
//! real/apple/real_001.jpg	8	real	train
//! ```
//!
//! Paths are relative to a dataset root. Lines starting with `#` and blank
//! lines are ignored. Domain order is the order of first appearance.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codec::write_atomic;
use crate::error::{Error, Result};

pub const HEADER: &str = "path\tclass\tdomain\tsplit";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::format(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ManifestRow {
    pub path: String,
    pub class: usize,
    pub domain: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DomainManifest {
    pub rows: Vec<ManifestRow>,
}

fn check_field(what: &str, value: &str, line: usize) -> Result<()> {
    if value.is_empty() || value.contains(['\t', '\n', '\r']) {
        return Err(Error::format(format!("line {line}: empty or malformed {what}")));
    }
    Ok(())
}

impl DomainManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
            .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some((_, h)) if h == HEADER => {}
            Some((n, h)) => return Err(Error::format(format!("line {n}: expected header `{HEADER}`, found `{h}`"))),
            None => return Err(Error::format("manifest is empty")),
        }
        let mut rows = Vec::new();
        for (n, line) in lines {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(Error::format(format!("line {n}: expected 4 fields, found {}", f.len())));
            }
            check_field("path", f[0], n)?;
            check_field("domain", f[2], n)?;
            let class = f[1]
                .parse()
                .map_err(|_| Error::format(format!("line {n}: bad class id `{}`", f[1])))?;
            let split = f[3].parse().map_err(|e: Error| Error::format(format!("line {n}: {e}")))?;
            rows.push(ManifestRow { path: f[0].to_string(), class, domain: f[2].to_string(), split });
        }
        Ok(Self { rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::at_path(path))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_string().as_bytes())
    }

    pub fn domains(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.rows
            .iter()
            .filter(|r| seen.insert(r.domain.as_str()))
            .map(|r| r.domain.clone())
            .collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.rows.iter().filter(|r| r.split == split).count()
    }

    /// Class ids per domain (both splits).
    pub fn classes_by_domain(&self) -> BTreeMap<String, BTreeSet<usize>> {
        let mut out: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
        for r in &self.rows {
            out.entry(r.domain.clone()).or_default().insert(r.class);
        }
        out
    }

    /// Fails unless every domain covers the same class set.
    pub fn check_shared_classes(&self) -> Result<BTreeSet<usize>> {
        let domains = self.domains();
        let by_domain = self.classes_by_domain();
        let first = domains.first().ok_or_else(|| Error::Manifest("manifest has no rows".into()))?;
        let reference = &by_domain[first];
        for d in &domains[1..] {
            let set = &by_domain[d];
            if set != reference {
                let missing: Vec<_> = reference.difference(set).collect();
                let extra: Vec<_> = set.difference(reference).collect();
                return Err(Error::Manifest(format!(
                    "domain `{d}` class set differs from `{first}`: missing {missing:?}, extra {extra:?}"
                )));
            }
        }
        Ok(reference.clone())
    }
}

impl fmt::Display for DomainManifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{HEADER}")?;
        for r in &self.rows {
            writeln!(f, "{}\t{}\t{}\t{}", r.path, r.class, r.domain, r.split)?;
        }
        Ok(())
    }
}
