//! Builder for the balanced 100-class, six-domain DomainNet subset.
//!
//! The raw tree is `<root>/<domain>/<class>/<image>`. Files are listed,
//! sorted, and shuffled with a seeded generator, so the result does not
//! depend on directory enumeration order. Per-split targets are spread
//! evenly over classes and then over the domains of each class; a class or
//! (class, domain) pair that cannot meet its share keeps everything it has
//! and the remainder is redistributed to the others.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::manifest::{DomainManifest, ManifestRow, Split};
use crate::error::{Error, Result};

/// Domain order used for the task sequence.
pub const DOMAINS: [&str; 6] = ["real", "clipart", "infograph", "painting", "sketch", "quickdraw"];

const TABLE: [(&str, [&str; 5]); 20] = [
    ("small animals", ["mouse", "squirrel", "rabbit", "dog", "raccoon"]),
    ("medium animals", ["tiger", "bear", "lion", "panda", "zebra"]),
    ("large animals", ["camel", "horse", "kangaroo", "elephant", "cow"]),
    ("aquatic mammals", ["whale", "shark", "fish", "dolphin", "octopus"]),
    ("non-insect invertebrates", ["snail", "scorpion", "spider", "lobster", "crab"]),
    ("insects", ["bee", "butterfly", "mosquito", "bird", "bat"]),
    ("vehicle", ["bus", "bicycle", "motorbike", "train", "pickup_truck"]),
    ("sky-vehicle", ["airplane", "flying_saucer", "aircraft_carrier", "helicopter", "hot_air_balloon"]),
    ("fruits", ["strawberry", "banana", "pear", "apple", "watermelon"]),
    ("vegetables", ["carrot", "asparagus", "mushroom", "onion", "broccoli"]),
    ("music", ["trombone", "violin", "cello", "guitar", "clarinet"]),
    ("furniture", ["chair", "dresser", "table", "couch", "bed"]),
    ("household electrical devices", ["clock", "floor_lamp", "telephone", "television", "keyboard"]),
    ("tools", ["saw", "axe", "hammer", "screwdriver", "scissors"]),
    ("clothes & accessories", ["bowtie", "pants", "jacket", "sock", "shorts"]),
    ("man-made outdoor", ["skyscraper", "windmill", "house", "castle", "bridge"]),
    ("nature", ["cloud", "bush", "ocean", "river", "mountain"]),
    ("food", ["birthday_cake", "hamburger", "ice_cream", "sandwich", "pizza"]),
    ("stationary", ["calendar", "marker", "map", "eraser", "pencil"]),
    ("household items", ["wine_bottle", "cup", "teapot", "frying_pan", "wine_glass"]),
];

/// Supercategories with their member classes. Class ids follow table order
/// (supercategory-major), so supercategory `s` owns ids `5s..5s+5`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTable {
    pub supercategories: Vec<(String, Vec<String>)>,
}

impl Default for ClassTable {
    fn default() -> Self {
        Self::standard()
    }
}

impl ClassTable {
    pub fn standard() -> Self {
        Self {
            supercategories: TABLE
                .iter()
                .map(|(s, cs)| (s.to_string(), cs.iter().map(|c| c.to_string()).collect()))
                .collect(),
        }
    }

    pub fn class_names(&self) -> Vec<&str> {
        self.supercategories.iter().flat_map(|(_, cs)| cs.iter().map(String::as_str)).collect()
    }

    pub fn num_classes(&self) -> usize {
        self.supercategories.iter().map(|(_, cs)| cs.len()).sum()
    }

    pub fn class_id(&self, name: &str) -> Option<usize> {
        self.class_names().iter().position(|&c| c == name)
    }

    /// Supercategory of a class id.
    pub fn supercategory_of(&self, class: usize) -> Option<&str> {
        let mut base = 0;
        for (s, cs) in &self.supercategories {
            if class < base + cs.len() {
                return Some(s);
            }
            base += cs.len();
        }
        None
    }

    /// 20 supercategories, 5 classes each, 100 distinct names.
    pub fn self_check(&self) -> Result<()> {
        if self.supercategories.len() != 20 {
            return Err(Error::config(format!("expected 20 supercategories, found {}", self.supercategories.len())));
        }
        if let Some((s, cs)) = self.supercategories.iter().find(|(_, cs)| cs.len() != 5) {
            return Err(Error::config(format!("supercategory `{s}` has {} classes, expected 5", cs.len())));
        }
        let names = self.class_names();
        let unique: BTreeSet<&str> = names.iter().copied().collect();
        if unique.len() != 100 {
            return Err(Error::config(format!("expected 100 distinct class names, found {}", unique.len())));
        }
        if let Some(bad) = names.iter().find(|n| n.is_empty() || n.contains(['/', '\\', '\t'])) {
            return Err(Error::config(format!("class name `{bad}` is not a valid directory name")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BalancePolicy {
    pub train_total: usize,
    pub test_total: usize,
    /// Side length used when materializing resized copies.
    pub image_size: u32,
    pub domains: Vec<String>,
    /// Test share used when no official split lists are present.
    pub test_fraction: f64,
}

impl Default for BalancePolicy {
    fn default() -> Self {
        Self {
            train_total: 67080,
            test_total: 19464,
            image_size: 64,
            domains: DOMAINS.iter().map(|d| d.to_string()).collect(),
            test_fraction: 19464.0 / (67080.0 + 19464.0),
        }
    }
}

impl BalancePolicy {
    pub fn validate(&self) -> Result<()> {
        if self.train_total == 0 || self.test_total == 0 {
            return Err(Error::config("split totals must be positive"));
        }
        if self.image_size == 0 {
            return Err(Error::config("image_size must be positive"));
        }
        if self.domains.is_empty() || self.domains.iter().collect::<BTreeSet<_>>().len() != self.domains.len() {
            return Err(Error::config("domains must be non-empty and distinct"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::config("test_fraction must lie in (0, 1)"));
        }
        Ok(())
    }

    fn total(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train_total,
            Split::Test => self.test_total,
        }
    }
}

/// Spreads `total` as evenly as the capacities allow. When the capacities
/// sum to less than `total`, everything is taken.
pub fn water_fill(total: usize, caps: &[usize]) -> Vec<usize> {
    let sum: usize = caps.iter().sum();
    if total >= sum {
        return caps.to_vec();
    }
    let filled = |level: usize| caps.iter().map(|&c| c.min(level)).sum::<usize>();
    let (mut lo, mut hi) = (0usize, caps.iter().copied().max().unwrap_or(0));
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if filled(mid) <= total {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let mut out: Vec<usize> = caps.iter().map(|&c| c.min(lo)).collect();
    let mut rest = total - out.iter().sum::<usize>();
    for (o, &c) in out.iter_mut().zip(caps) {
        if rest == 0 {
            break;
        }
        if c > lo {
            *o += 1;
            rest -= 1;
        }
    }
    out
}

/// Files found for one (domain, class) pair, split into train/test pools.
#[derive(Debug, Clone, Default)]
struct Pools {
    train: Vec<String>,
    test: Vec<String>,
}

impl Pools {
    fn get(&self, split: Split) -> &Vec<String> {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }
}

fn list_files(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(Error::at_path(dir))? {
        let entry = entry.map_err(Error::at_path(dir))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if !name.starts_with('.') && entry.file_type().map_err(Error::at_path(dir))?.is_file() {
            names.push(name);
        }
    }
    names.sort_unstable();
    Ok(names)
}

/// Official list `<root>/<domain>_<split>.txt`: first token per line is the
/// root-relative path.
fn read_split_list(root: &Path, domain: &str, split: Split) -> Result<Option<HashSet<String>>> {
    let path = root.join(format!("{domain}_{split}.txt"));
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).map_err(Error::at_path(&path))?;
    Ok(Some(text.lines().filter_map(|l| l.split_whitespace().next()).map(str::to_string).collect()))
}

/// Per-pair deficit relative to the even share, for the build report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shortfall {
    pub domain: String,
    pub class: String,
    pub split: Split,
    pub available: usize,
    pub even_share: usize,
}

#[derive(Debug, Clone)]
pub struct BuildReport {
    pub manifest: DomainManifest,
    pub shortfalls: Vec<Shortfall>,
    pub used_split_lists: bool,
}

impl BuildReport {
    pub fn summary(&self) -> String {
        let m = &self.manifest;
        format!(
            "{} train / {} test rows, {} domains, {} pairs below the even share, split lists: {}",
            m.count(Split::Train),
            m.count(Split::Test),
            m.domains().len(),
            self.shortfalls.len(),
            if self.used_split_lists { "official" } else { "seeded" }
        )
    }
}

pub fn build_dn4il(root: &Path, table: &ClassTable, policy: &BalancePolicy, seed: u64) -> Result<BuildReport> {
    table.self_check()?;
    policy.validate()?;
    let classes = table.class_names();

    let mut gaps = Vec::new();
    for d in &policy.domains {
        if !root.join(d).is_dir() {
            gaps.push(format!("missing domain `{d}`"));
        }
    }
    let mut pools: BTreeMap<(usize, usize), Pools> = BTreeMap::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used_lists = false;
    for (di, d) in policy.domains.iter().enumerate() {
        if !root.join(d).is_dir() {
            continue;
        }
        let lists = (read_split_list(root, d, Split::Train)?, read_split_list(root, d, Split::Test)?);
        for (ci, c) in classes.iter().enumerate() {
            let dir = root.join(d).join(c);
            if !dir.is_dir() {
                gaps.push(format!("missing class `{c}` in domain `{d}`"));
                continue;
            }
            let files: Vec<String> = list_files(&dir)?.into_iter().map(|f| format!("{d}/{c}/{f}")).collect();
            if files.is_empty() {
                gaps.push(format!("no images for class `{c}` in domain `{d}`"));
                continue;
            }
            let mut p = Pools::default();
            match &lists {
                (Some(train), Some(test)) => {
                    used_lists = true;
                    p.train = files.iter().filter(|f| train.contains(*f)).cloned().collect();
                    p.test = files.iter().filter(|f| test.contains(*f) && !train.contains(*f)).cloned().collect();
                    p.train.shuffle(&mut rng);
                    p.test.shuffle(&mut rng);
                }
                _ => {
                    let mut all = files;
                    all.shuffle(&mut rng);
                    let n_test = ((all.len() as f64) * policy.test_fraction).round() as usize;
                    p.train = all.split_off(n_test);
                    p.test = all;
                }
            }
            pools.insert((di, ci), p);
        }
    }
    if !gaps.is_empty() {
        return Err(Error::Ingestion { gaps });
    }

    let nd = policy.domains.len();
    let mut rows = Vec::new();
    let mut shortfalls = Vec::new();
    for split in [Split::Train, Split::Test] {
        let pair_cap = |ci: usize, di: usize| pools[&(di, ci)].get(split).len();
        let class_caps: Vec<usize> = (0..classes.len()).map(|ci| (0..nd).map(|di| pair_cap(ci, di)).sum()).collect();
        let class_targets = water_fill(policy.total(split), &class_caps);
        let even_pair = policy.total(split).div_ceil(classes.len() * nd);
        for (ci, &ct) in class_targets.iter().enumerate() {
            let caps: Vec<usize> = (0..nd).map(|di| pair_cap(ci, di)).collect();
            for (di, take) in water_fill(ct, &caps).into_iter().enumerate() {
                if caps[di] < even_pair {
                    shortfalls.push(Shortfall {
                        domain: policy.domains[di].clone(),
                        class: classes[ci].to_string(),
                        split,
                        available: caps[di],
                        even_share: even_pair,
                    });
                }
                let mut chosen: Vec<&String> = pools[&(di, ci)].get(split)[..take].iter().collect();
                chosen.sort_unstable();
                rows.extend(chosen.into_iter().map(|path| ManifestRow {
                    path: path.clone(),
                    class: ci,
                    domain: policy.domains[di].clone(),
                    split,
                }));
            }
        }
    }
    let order = |d: &str| policy.domains.iter().position(|x| x == d).unwrap_or(usize::MAX);
    rows.sort_by(|a, b| (order(&a.domain), a.split, a.class, &a.path).cmp(&(order(&b.domain), b.split, b.class, &b.path)));
    Ok(BuildReport { manifest: DomainManifest { rows }, shortfalls, used_split_lists: used_lists })
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    /// (domain, class id) → (train, test)
    pub counts: BTreeMap<(String, usize), (usize, usize)>,
    pub problems: Vec<String>,
    /// Per domain: largest and smallest per-class count relative to the
    /// domain mean (both splits).
    pub balance: Vec<(String, f64, f64)>,
    pub train_rows: usize,
    pub test_rows: usize,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.problems.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rows: {} train, {} test", self.train_rows, self.test_rows)?;
        writeln!(f, "domain\tmax/mean\tmin/mean")?;
        for (d, hi, lo) in &self.balance {
            writeln!(f, "{d}\t{hi:.3}\t{lo:.3}")?;
        }
        writeln!(f, "domain\tclass\ttrain\ttest")?;
        for ((d, c), (tr, te)) in &self.counts {
            writeln!(f, "{d}\t{c}\t{tr}\t{te}")?;
        }
        if self.passed() {
            writeln!(f, "PASS")
        } else {
            for p in &self.problems {
                writeln!(f, "problem: {p}")?;
            }
            writeln!(f, "FAIL ({} problems)", self.problems.len())
        }
    }
}

/// Checks class ids against the table, path/class agreement, duplicate rows,
/// train/test leaks, (domain, class) coverage, and — when `root` is given —
/// that every referenced file exists.
pub fn validate_manifest(manifest: &DomainManifest, table: &ClassTable, root: Option<&Path>) -> ValidationReport {
    let names = table.class_names();
    let mut report = ValidationReport::default();
    let mut seen: BTreeMap<&str, Split> = BTreeMap::new();
    for (i, r) in manifest.rows.iter().enumerate() {
        let row = i + 1;
        match names.get(r.class) {
            None => report.problems.push(format!("row {row} (`{}`): class {} is not in the class table", r.path, r.class)),
            Some(name) => {
                let parts: Vec<&str> = r.path.split('/').collect();
                if parts.len() == 3 && parts[1] != *name {
                    report.problems.push(format!(
                        "row {row} (`{}`): directory says `{}`, class id {} is `{name}`",
                        r.path, parts[1], r.class
                    ));
                }
            }
        }
        match seen.get(r.path.as_str()) {
            Some(&s) if s == r.split => report.problems.push(format!("row {row}: duplicate path `{}`", r.path)),
            Some(_) => report.problems.push(format!("row {row}: path `{}` is in both train and test", r.path)),
            None => {
                seen.insert(&r.path, r.split);
            }
        }
        if let Some(root) = root {
            if !root.join(&r.path).is_file() {
                report.problems.push(format!("row {row}: missing file `{}`", r.path));
            }
        }
        let e = report.counts.entry((r.domain.clone(), r.class)).or_default();
        match r.split {
            Split::Train => {
                e.0 += 1;
                report.train_rows += 1;
            }
            Split::Test => {
                e.1 += 1;
                report.test_rows += 1;
            }
        }
    }
    let domains = manifest.domains();
    let classes: BTreeSet<usize> = manifest.rows.iter().map(|r| r.class).collect();
    for d in &domains {
        let per_class: Vec<usize> = classes
            .iter()
            .map(|&c| report.counts.get(&(d.clone(), c)).map_or(0, |(a, b)| a + b))
            .collect();
        for (&c, &n) in classes.iter().zip(&per_class) {
            if n == 0 {
                report.problems.push(format!("class {c} has no rows in domain `{d}`"));
            }
        }
        let mean = per_class.iter().sum::<usize>() as f64 / per_class.len().max(1) as f64;
        if mean > 0.0 {
            let hi = *per_class.iter().max().unwrap() as f64 / mean;
            let lo = *per_class.iter().min().unwrap() as f64 / mean;
            report.balance.push((d.clone(), hi, lo));
        }
    }
    report
}

/// Writes 64×64 (per policy) PNG copies of every listed image under `out`
/// and returns the manifest pointing at them.
pub fn materialize(manifest: &DomainManifest, root: &Path, out: &Path, size: u32) -> Result<DomainManifest> {
    let mut rows = Vec::with_capacity(manifest.rows.len());
    for r in &manifest.rows {
        let src = root.join(&r.path);
        let rel = PathBuf::from(&r.path).with_extension("png");
        let dst = out.join(&rel);
        if let Some(parent) = dst.parent() {
            std::fs::create_dir_all(parent).map_err(Error::at_path(parent))?;
        }
        let img = image::open(&src).map_err(|e| Error::data(format!("{}: {e}", src.display())))?;
        img.resize_exact(size, size, image::imageops::FilterType::Triangle)
            .to_rgb8()
            .save(&dst)
            .map_err(|e| Error::data(format!("{}: {e}", dst.display())))?;
        rows.push(ManifestRow { path: rel.to_string_lossy().replace('\\', "/"), ..r.clone() });
    }
    Ok(DomainManifest { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_table_is_well_formed() {
        let t = ClassTable::standard();
        t.self_check().unwrap();
        assert_eq!(t.num_classes(), 100);
        assert_eq!(t.supercategories[8].1, vec!["strawberry", "banana", "pear", "apple", "watermelon"]);
        assert_eq!(t.supercategory_of(t.class_id("axe").unwrap()), Some("tools"));
    }

    #[test]
    fn self_check_rejects_duplicates() {
        let mut t = ClassTable::standard();
        t.supercategories[0].1[0] = "dog".into();
        assert!(t.self_check().is_err());
    }

    #[test]
    fn water_fill_is_even_under_caps() {
        assert_eq!(water_fill(10, &[100, 100]), vec![5, 5]);
        assert_eq!(water_fill(10, &[2, 100, 100]), vec![2, 4, 4]);
        assert_eq!(water_fill(11, &[100, 100]), vec![6, 5]);
        assert_eq!(water_fill(50, &[3, 4]), vec![3, 4]);
        assert_eq!(water_fill(0, &[3, 4]), vec![0, 0]);
    }

    #[test]
    fn validation_flags_unknown_class_and_leaks() {
        let t = ClassTable::standard();
        let m = DomainManifest::parse(
            "path\tclass\tdomain\tsplit\nreal/mouse/a.jpg\t0\treal\ttrain\nreal/mouse/a.jpg\t0\treal\ttest\nreal/x/b.jpg\t150\treal\ttrain\n",
        )
        .unwrap();
        let r = validate_manifest(&m, &t, None);
        assert!(!r.passed());
        assert!(r.problems.iter().any(|p| p.contains("both train and test")));
        assert!(r.problems.iter().any(|p| p.contains("row 3") && p.contains("not in the class table")));
    }
}
