//! Synthetic compositional worlds, seen/unseen splits and feature files.
//!
//! A world's feature for composition `(a, o)` is
//! `M_a · e_a + M_o · e_o + σ · ε` with unit-norm raw embeddings `e` and
//! Gaussian maps `M`, so unseen pairs are predictable from seen ones.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::diff::Tensor;
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"CGF1";
pub const FEATURE_VERSION: u32 = 1;

/// An (attribute, object) label pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Composition {
    pub attr: usize,
    pub obj: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldConfig {
    pub attributes: usize,
    pub objects: usize,
    pub raw_width: usize,
    pub feature_width: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            attributes: 5,
            objects: 5,
            raw_width: 16,
            feature_width: 32,
            sigma: 0.3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub config: WorldConfig,
    pub attr_names: Vec<String>,
    pub obj_names: Vec<String>,
    pub attr_embeddings: Vec<Vec<f64>>,
    pub obj_embeddings: Vec<Vec<f64>>,
    /// Per-attribute `[feature_width, raw_width]` maps.
    pub attr_maps: Vec<Tensor>,
    pub obj_maps: Vec<Tensor>,
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v = gaussian_vec(rng, n);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn apply(map: &Tensor, e: &[f64]) -> Vec<f64> {
    map.values()
        .chunks(e.len())
        .map(|row| row.iter().zip(e).map(|(m, x)| m * x).sum())
        .collect()
}

/// Samples a world from its configuration.
pub fn synth_world(config: &WorldConfig) -> Result<World> {
    if config.attributes < 2 || config.objects < 2 {
        return Err(Error::Config("a world needs at least 2 attributes and 2 objects".into()));
    }
    if config.raw_width < 2 || config.feature_width < 2 {
        return Err(Error::Config("world widths must be at least 2".into()));
    }
    if !(config.sigma >= 0.0) || !config.sigma.is_finite() {
        return Err(Error::Config(format!("sigma must be finite and >= 0, got {}", config.sigma)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (r, f) = (config.raw_width, config.feature_width);
    let attr_embeddings: Vec<_> = (0..config.attributes).map(|_| unit_vec(&mut rng, r)).collect();
    let obj_embeddings: Vec<_> = (0..config.objects).map(|_| unit_vec(&mut rng, r)).collect();
    // Standard normal entries, so M · e has unit-variance coordinates for unit e.
    let map = |rng: &mut ChaCha8Rng| Tensor::matrix(f, r, gaussian_vec(rng, f * r));
    let attr_maps = (0..config.attributes).map(|_| map(&mut rng)).collect::<Result<_>>()?;
    let obj_maps = (0..config.objects).map(|_| map(&mut rng)).collect::<Result<_>>()?;
    Ok(World {
        config: config.clone(),
        attr_names: (0..config.attributes).map(|i| format!("attr{i}")).collect(),
        obj_names: (0..config.objects).map(|i| format!("obj{i}")).collect(),
        attr_embeddings,
        obj_embeddings,
        attr_maps,
        obj_maps,
    })
}

impl World {
    pub fn composition_count(&self) -> usize {
        self.config.attributes * self.config.objects
    }

    pub fn composition(&self, index: usize) -> Composition {
        Composition {
            attr: index / self.config.objects,
            obj: index % self.config.objects,
        }
    }

    pub fn compositions(&self) -> Vec<Composition> {
        (0..self.composition_count()).map(|i| self.composition(i)).collect()
    }

    /// Noise-free feature of a composition.
    pub fn prototype(&self, c: Composition) -> Vec<f64> {
        let a = apply(&self.attr_maps[c.attr], &self.attr_embeddings[c.attr]);
        let o = apply(&self.obj_maps[c.obj], &self.obj_embeddings[c.obj]);
        a.into_iter().zip(o).map(|(x, y)| x + y).collect()
    }

    /// Raw word-embedding vocabulary (attributes first, then objects).
    pub fn vocabulary(&self) -> Vocabulary {
        let mut v = Vocabulary::default();
        for (n, e) in self.attr_names.iter().zip(&self.attr_embeddings) {
            v.insert(n.clone(), e.clone());
        }
        for (n, e) in self.obj_names.iter().zip(&self.obj_embeddings) {
            v.insert(n.clone(), e.clone());
        }
        v
    }
}

/// Features with composition labels.
///
/// `compositions` is the full label space; `labels[i]` indexes into it.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub attributes: Vec<String>,
    pub objects: Vec<String>,
    pub compositions: Vec<Composition>,
    pub width: usize,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.width..(i + 1) * self.width]
    }

    pub fn per_composition_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.compositions.len()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows whose label is in `keep`, with the full label space retained.
    pub fn subset(&self, keep: &[usize]) -> Dataset {
        let keep: BTreeSet<usize> = keep.iter().copied().collect();
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (i, &l) in self.labels.iter().enumerate() {
            if keep.contains(&l) {
                features.extend_from_slice(self.row(i));
                labels.push(l);
            }
        }
        Dataset {
            features,
            labels,
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> Dataset {
        Dataset {
            attributes: self.attributes.clone(),
            objects: self.objects.clone(),
            compositions: self.compositions.clone(),
            width: self.width,
            features: Vec::new(),
            labels: Vec::new(),
        }
    }

    /// Feature rows at `indices` as a matrix.
    pub fn gather(&self, indices: &[usize]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(indices.len() * self.width);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Tensor::matrix(indices.len(), self.width, data)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.len() != self.labels.len() * self.width {
            return Err(Error::Format("feature count does not match rows x width".into()));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= self.compositions.len()) {
            return Err(Error::Format(format!("label {bad} outside label space")));
        }
        for c in &self.compositions {
            if c.attr >= self.attributes.len() || c.obj >= self.objects.len() {
                return Err(Error::Format("composition refers to unknown vocabulary entry".into()));
            }
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset"));
        }
        Ok(())
    }

    /// The attribute and object names of a label.
    pub fn label_names(&self, label: usize) -> (&str, &str) {
        let c = self.compositions[label];
        (&self.attributes[c.attr], &self.objects[c.obj])
    }
}

/// `n` samples of every composition. Features are rounded to `f32` precision
/// so that the on-disk format stores them exactly.
pub fn sample_dataset(world: &World, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("samples per composition must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = world.config.feature_width;
    let sigma = world.config.sigma;
    let compositions = world.compositions();
    let mut features = Vec::with_capacity(compositions.len() * n * width);
    let mut labels = Vec::with_capacity(compositions.len() * n);
    for (label, &c) in compositions.iter().enumerate() {
        let proto = world.prototype(c);
        for _ in 0..n {
            for &p in &proto {
                let e: f64 = StandardNormal.sample(&mut rng);
                features.push((p + sigma * e) as f32 as f64);
            }
            labels.push(label);
        }
    }
    Ok(Dataset {
        attributes: world.attr_names.clone(),
        objects: world.obj_names.clone(),
        compositions,
        width,
        features,
        labels,
    })
}

// ── splits ───────────────────────────────────────────────────────────

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneralizedSplit {
    pub val_seen: Vec<usize>,
    pub val_unseen: Vec<usize>,
    pub test_seen: Vec<usize>,
    pub test_unseen: Vec<usize>,
}

/// Seen/unseen partition of the label space (composition indices).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub seen: Vec<usize>,
    pub unseen: Vec<usize>,
    pub generalized: Option<GeneralizedSplit>,
}

const MAX_SPLIT_RETRIES: usize = 1000;

fn covers(seen: &[usize], compositions: &[Composition], attributes: usize, objects: usize) -> bool {
    let mut a = vec![false; attributes];
    let mut o = vec![false; objects];
    for &s in seen {
        a[compositions[s].attr] = true;
        o[compositions[s].obj] = true;
    }
    a.into_iter().all(|x| x) && o.into_iter().all(|x| x)
}

impl SplitSpec {
    /// Checks disjointness, coverage of the label space and that every
    /// attribute and object occurs in some seen composition.
    pub fn validate(&self, compositions: &[Composition], attributes: usize, objects: usize) -> Result<()> {
        let seen: BTreeSet<_> = self.seen.iter().copied().collect();
        let unseen: BTreeSet<_> = self.unseen.iter().copied().collect();
        if seen.len() != self.seen.len() || unseen.len() != self.unseen.len() {
            return Err(Error::Config("split lists contain duplicates".into()));
        }
        if !seen.is_disjoint(&unseen) {
            return Err(Error::Config("seen and unseen compositions overlap".into()));
        }
        if seen.len() + unseen.len() != compositions.len() || seen.iter().chain(&unseen).any(|&c| c >= compositions.len()) {
            return Err(Error::Config("split does not partition the label space".into()));
        }
        if !covers(&self.seen, compositions, attributes, objects) {
            return Err(Error::Config("some attribute or object never appears in a seen composition".into()));
        }
        if let Some(g) = &self.generalized {
            let vu: BTreeSet<_> = g.val_unseen.iter().copied().collect();
            let tu: BTreeSet<_> = g.test_unseen.iter().copied().collect();
            if !vu.is_disjoint(&tu) {
                return Err(Error::Config("validation and test unseen compositions overlap".into()));
            }
            if !vu.is_subset(&unseen) || !tu.is_subset(&unseen) {
                return Err(Error::Config("generalized unseen parts must be unseen".into()));
            }
            if g.val_seen.iter().chain(&g.test_seen).any(|c| !seen.contains(c)) {
                return Err(Error::Config("generalized seen parts must be seen in training".into()));
            }
        }
        Ok(())
    }
}

/// Random closed/open-world split with `round(fraction · |C|)` unseen
/// compositions (at least one), resampled until coverage holds.
pub fn make_zscl_split(world: &World, unseen_fraction: f64, seed: u64) -> Result<SplitSpec> {
    zscl_split(&world.compositions(), world.config.attributes, world.config.objects, unseen_fraction, seed)
}

pub fn zscl_split(
    compositions: &[Composition],
    attributes: usize,
    objects: usize,
    unseen_fraction: f64,
    seed: u64,
) -> Result<SplitSpec> {
    if !(unseen_fraction > 0.0 && unseen_fraction < 1.0) {
        return Err(Error::Config(format!("unseen fraction must lie in (0, 1), got {unseen_fraction}")));
    }
    let total = compositions.len();
    let unseen_count = ((unseen_fraction * total as f64).round() as usize).clamp(1, total.saturating_sub(1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..total).collect();
    for _ in 0..MAX_SPLIT_RETRIES {
        order.shuffle(&mut rng);
        let mut unseen = order[..unseen_count].to_vec();
        let mut seen = order[unseen_count..].to_vec();
        if covers(&seen, compositions, attributes, objects) {
            seen.sort_unstable();
            unseen.sort_unstable();
            return Ok(SplitSpec {
                seen,
                unseen,
                generalized: None,
            });
        }
    }
    Err(Error::Config(format!(
        "could not find a split with {unseen_count} unseen compositions covering every attribute and object"
    )))
}

/// Sizes of the four held-out parts of a generalized split.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GeneralizedCounts {
    pub val_seen: usize,
    pub val_unseen: usize,
    pub test_seen: usize,
    pub test_unseen: usize,
}

impl GeneralizedCounts {
    /// A fifth of the label space for each part.
    pub fn for_label_space(total: usize) -> Self {
        let k = ((total as f64 * 0.2).round() as usize).max(1);
        GeneralizedCounts {
            val_seen: k,
            val_unseen: k,
            test_seen: k,
            test_unseen: k,
        }
    }
}

/// Training on seen compositions; validation and test each mix seen
/// compositions with their own disjoint unseen compositions.
pub fn make_generalized_split(world: &World, counts: GeneralizedCounts, seed: u64) -> Result<SplitSpec> {
    generalized_split(&world.compositions(), world.config.attributes, world.config.objects, counts, seed)
}

pub fn generalized_split(
    compositions: &[Composition],
    attributes: usize,
    objects: usize,
    counts: GeneralizedCounts,
    seed: u64,
) -> Result<SplitSpec> {
    let total = compositions.len();
    let unseen_count = counts.val_unseen + counts.test_unseen;
    if counts.val_unseen == 0 || counts.test_unseen == 0 || counts.val_seen == 0 || counts.test_seen == 0 {
        return Err(Error::Config("generalized split parts must be non-empty".into()));
    }
    if unseen_count >= total {
        return Err(Error::Config(format!(
            "label space of {total} is too small for {unseen_count} unseen compositions"
        )));
    }
    let seen_count = total - unseen_count;
    if counts.val_seen > seen_count || counts.test_seen > seen_count {
        return Err(Error::Config(format!(
            "only {seen_count} seen compositions for held-in parts of {} and {}",
            counts.val_seen, counts.test_seen
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..total).collect();
    for _ in 0..MAX_SPLIT_RETRIES {
        order.shuffle(&mut rng);
        let seen = &order[unseen_count..];
        if !covers(seen, compositions, attributes, objects) {
            continue;
        }
        let sorted = |v: &[usize]| {
            let mut v = v.to_vec();
            v.sort_unstable();
            v
        };
        let mut held: Vec<usize> = seen.to_vec();
        held.shuffle(&mut rng);
        let val_seen = sorted(&held[..counts.val_seen]);
        held.shuffle(&mut rng);
        let test_seen = sorted(&held[..counts.test_seen]);
        return Ok(SplitSpec {
            seen: sorted(seen),
            unseen: sorted(&order[..unseen_count]),
            generalized: Some(GeneralizedSplit {
                val_seen,
                val_unseen: sorted(&order[..counts.val_unseen]),
                test_seen,
                test_unseen: sorted(&order[counts.val_unseen..unseen_count]),
            }),
        });
    }
    Err(Error::Config("could not find a generalized split covering every attribute and object".into()))
}

// ── files ────────────────────────────────────────────────────────────

fn read_u32(buf: &[u8], pos: &mut usize) -> Result<u32> {
    let bytes = buf
        .get(*pos..*pos + 4)
        .ok_or_else(|| Error::Format("truncated feature file".into()))?;
    *pos += 4;
    Ok(u32::from_le_bytes(bytes.try_into().expect("4 bytes")))
}

/// Serializes a dataset in the CGF1 layout.
pub fn encode_features(dataset: &Dataset) -> Result<Vec<u8>> {
    dataset.validate()?;
    let to_u32 = |n: usize, what: &str| {
        u32::try_from(n).map_err(|_| Error::Format(format!("{what} {n} exceeds u32")))
    };
    let mut out = Vec::new();
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&to_u32(dataset.len(), "row count")?.to_le_bytes());
    out.extend_from_slice(&to_u32(dataset.width, "width")?.to_le_bytes());
    out.extend_from_slice(&to_u32(dataset.compositions.len(), "composition count")?.to_le_bytes());
    for c in &dataset.compositions {
        let (a, o) = (&dataset.attributes[c.attr], &dataset.objects[c.obj]);
        if a.contains(['\t', '\n']) || o.contains(['\t', '\n']) {
            return Err(Error::Format(format!("label names may not contain tabs or newlines: {a:?} {o:?}")));
        }
        writeln!(out, "{a}\t{o}").expect("writing to a Vec");
    }
    for &v in &dataset.features {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    for &l in &dataset.labels {
        out.extend_from_slice(&(l as u32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_features(buf: &[u8]) -> Result<Dataset> {
    if buf.len() < 4 || &buf[..4] != FEATURE_MAGIC {
        return Err(Error::Format("not a CGF1 feature file (bad magic)".into()));
    }
    let mut pos = 4;
    let version = read_u32(buf, &mut pos)?;
    if version != FEATURE_VERSION {
        return Err(Error::Format(format!("unsupported feature file version {version}")));
    }
    let rows = read_u32(buf, &mut pos)? as usize;
    let width = read_u32(buf, &mut pos)? as usize;
    let count = read_u32(buf, &mut pos)? as usize;
    let mut attributes: Vec<String> = Vec::new();
    let mut objects: Vec<String> = Vec::new();
    let mut attr_index: HashMap<String, usize> = HashMap::new();
    let mut obj_index: HashMap<String, usize> = HashMap::new();
    let mut compositions = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let end = buf[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("truncated label block".into()))?;
        let line = std::str::from_utf8(&buf[pos..pos + end])
            .map_err(|_| Error::Format("label block is not UTF-8".into()))?;
        pos += end + 1;
        let (a, o) = line
            .split_once('\t')
            .ok_or_else(|| Error::Format(format!("label line {line:?} lacks a tab")))?;
        let ai = *attr_index.entry(a.to_string()).or_insert_with(|| {
            attributes.push(a.to_string());
            attributes.len() - 1
        });
        let oi = *obj_index.entry(o.to_string()).or_insert_with(|| {
            objects.push(o.to_string());
            objects.len() - 1
        });
        compositions.push(Composition { attr: ai, obj: oi });
    }
    let payload = rows
        .checked_mul(width)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(rows * 4))
        .ok_or_else(|| Error::Format("header sizes overflow".into()))?;
    if buf.len() - pos != payload {
        return Err(Error::Format(format!(
            "payload is {} bytes, header implies {payload}",
            buf.len() - pos
        )));
    }
    let features = buf[pos..pos + rows * width * 4]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
        .collect();
    pos += rows * width * 4;
    let labels = buf[pos..]
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
        .collect();
    let dataset = Dataset {
        attributes,
        objects,
        compositions,
        width,
        features,
        labels,
    };
    dataset.validate()?;
    Ok(dataset)
}

pub fn write_features(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_features(dataset)?;
    fs::write(path.as_ref(), bytes).map_err(|e| Error::io(path.as_ref(), e))
}

pub fn read_features(path: impl AsRef<Path>) -> Result<Dataset> {
    let mut buf = Vec::new();
    fs::File::open(path.as_ref())
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path.as_ref(), e))?;
    decode_features(&buf)
}

/// Plain-text split file: one `key idx idx ...` line per part.
pub fn write_split(split: &SplitSpec, path: impl AsRef<Path>) -> Result<()> {
    let mut text = String::from("# compgen split v1\n");
    let mut line = |key: &str, v: &[usize]| {
        text.push_str(key);
        for i in v {
            text.push(' ');
            text.push_str(&i.to_string());
        }
        text.push('\n');
    };
    line("seen", &split.seen);
    line("unseen", &split.unseen);
    if let Some(g) = &split.generalized {
        line("val_seen", &g.val_seen);
        line("val_unseen", &g.val_unseen);
        line("test_seen", &g.test_seen);
        line("test_unseen", &g.test_unseen);
    }
    fs::write(path.as_ref(), text).map_err(|e| Error::io(path.as_ref(), e))
}

pub fn read_split(path: impl AsRef<Path>) -> Result<SplitSpec> {
    let text = fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    let mut parts: HashMap<String, Vec<usize>> = HashMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let key = it.next().expect("non-empty line").to_string();
        let values = it
            .map(|s| s.parse::<usize>().map_err(|_| Error::Format(format!("bad index {s:?} in split file"))))
            .collect::<Result<Vec<_>>>()?;
        if parts.insert(key.clone(), values).is_some() {
            return Err(Error::Format(format!("duplicate split key {key}")));
        }
    }
    let mut take = |k: &str| parts.remove(k);
    let seen = take("seen").ok_or_else(|| Error::Format("split file lacks `seen`".into()))?;
    let unseen = take("unseen").ok_or_else(|| Error::Format("split file lacks `unseen`".into()))?;
    let generalized = match (take("val_seen"), take("val_unseen"), take("test_seen"), take("test_unseen")) {
        (Some(val_seen), Some(val_unseen), Some(test_seen), Some(test_unseen)) => Some(GeneralizedSplit {
            val_seen,
            val_unseen,
            test_seen,
            test_unseen,
        }),
        (None, None, None, None) => None,
        _ => return Err(Error::Format("generalized split needs all four held-out parts".into())),
    };
    if let Some(k) = parts.keys().next() {
        return Err(Error::Format(format!("unknown split key {k}")));
    }
    Ok(SplitSpec {
        seen,
        unseen,
        generalized,
    })
}

/// Name → raw embedding, in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Vocabulary {
    pub entries: Vec<(String, Vec<f64>)>,
}

impl Vocabulary {
    pub fn insert(&mut self, name: String, vector: Vec<f64>) {
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(e) => e.1 = vector,
            None => self.entries.push((name, vector)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn width(&self) -> Option<usize> {
        self.entries.first().map(|(_, v)| v.len())
    }

    /// Raw embeddings for a dataset's attributes and objects.
    pub fn lookup(&self, dataset: &Dataset) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let find = |n: &String| {
            self.get(n)
                .map(|v| v.to_vec())
                .ok_or_else(|| Error::Format(format!("vocabulary has no embedding for {n:?}")))
        };
        let attrs = dataset.attributes.iter().map(find).collect::<Result<Vec<_>>>()?;
        let objs = dataset.objects.iter().map(find).collect::<Result<Vec<_>>>()?;
        Ok((attrs, objs))
    }
}

/// One line per entry: `name v1 v2 ...`.
pub fn write_vocabulary(vocab: &Vocabulary, path: impl AsRef<Path>) -> Result<()> {
    let file = fs::File::create(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    let mut w = BufWriter::new(file);
    for (name, v) in &vocab.entries {
        let mut line = name.clone();
        for x in v {
            line.push(' ');
            line.push_str(&x.to_string());
        }
        writeln!(w, "{line}").map_err(|e| Error::io(path.as_ref(), e))?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

pub fn read_vocabulary(path: impl AsRef<Path>) -> Result<Vocabulary> {
    let text = fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    let mut vocab = Vocabulary::default();
    for (lineno, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        let Some(name) = it.next() else { continue };
        let v = it
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::Format(format!("line {}: bad value {s:?}", lineno + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(w) = vocab.width() {
            if w != v.len() {
                return Err(Error::Format(format!("line {}: width {} differs from {w}", lineno + 1, v.len())));
            }
        }
        vocab.insert(name.to_string(), v);
    }
    Ok(vocab)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world(seed: u64, sigma: f64) -> World {
        synth_world(&WorldConfig {
            sigma,
            seed,
            ..WorldConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn world_basics() {
        let w = world(1, 0.3);
        assert_eq!(w.composition_count(), 25);
        assert_eq!(w, world(1, 0.3));
        assert_ne!(w, world(2, 0.3));
        for e in w.attr_embeddings.iter().chain(&w.obj_embeddings) {
            let n: f64 = e.iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_worlds_rejected() {
        let bad = WorldConfig {
            attributes: 1,
            ..WorldConfig::default()
        };
        assert!(synth_world(&bad).is_err());
        let bad = WorldConfig {
            feature_width: 1,
            ..WorldConfig::default()
        };
        assert!(synth_world(&bad).is_err());
    }

    #[test]
    fn noise_free_samples_are_prototypes() {
        let w = world(3, 0.0);
        let d = sample_dataset(&w, 3, 9).unwrap();
        for i in 0..d.len() {
            let proto: Vec<f64> = w.prototype(w.composition(d.labels[i])).iter().map(|&v| v as f32 as f64).collect();
            assert_eq!(d.row(i), proto.as_slice());
        }
        let one = sample_dataset(&w, 1, 0).unwrap();
        assert_eq!(one.len(), 25);
    }

    #[test]
    fn dataset_size_and_counts() {
        let w = world(0, 0.3);
        let d = sample_dataset(&w, 20, 4).unwrap();
        assert_eq!(d.len(), 500);
        assert!(d.per_composition_counts().iter().all(|&c| c == 20));
        assert!(sample_dataset(&w, 0, 4).is_err());
        assert_eq!(d, sample_dataset(&w, 20, 4).unwrap());
    }

    #[test]
    fn split_sizes() {
        let w = world(0, 0.3);
        let s = make_zscl_split(&w, 0.4, 1).unwrap();
        assert_eq!((s.seen.len(), s.unseen.len()), (15, 10));
        let tiny = make_zscl_split(&w, 1e-6, 1).unwrap();
        assert_eq!(tiny.unseen.len(), 1);
        assert!(make_zscl_split(&w, 1.0, 1).is_err());
        assert!(make_zscl_split(&w, 0.0, 1).is_err());
    }

    #[test]
    fn infeasible_coverage_reported() {
        // 2x2 with 3 unseen leaves one seen pair, which cannot cover both attributes.
        let w = synth_world(&WorldConfig {
            attributes: 2,
            objects: 2,
            ..WorldConfig::default()
        })
        .unwrap();
        assert!(make_zscl_split(&w, 0.75, 0).is_err());
    }

    #[test]
    fn generalized_partition() {
        let w = world(0, 0.3);
        let counts = GeneralizedCounts::for_label_space(25);
        let s = make_generalized_split(&w, counts, 5).unwrap();
        let g = s.generalized.as_ref().unwrap();
        assert_eq!(s.seen.len(), 15);
        assert_eq!((g.val_seen.len(), g.val_unseen.len()), (5, 5));
        assert_eq!((g.test_seen.len(), g.test_unseen.len()), (5, 5));
        s.validate(&w.compositions(), 5, 5).unwrap();
        let too_many = GeneralizedCounts {
            val_unseen: 13,
            test_unseen: 12,
            ..counts
        };
        assert!(make_generalized_split(&w, too_many, 5).is_err());
    }

    #[test]
    fn feature_file_errors() {
        let w = world(0, 0.3);
        let d = sample_dataset(&w, 2, 0).unwrap();
        let mut bytes = encode_features(&d).unwrap();
        assert_eq!(decode_features(&bytes).unwrap(), d);
        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(decode_features(truncated), Err(Error::Format(_))));
        bytes[4] = 9;
        assert!(matches!(decode_features(&bytes), Err(Error::Format(_))));
        bytes[0] = b'X';
        assert!(matches!(decode_features(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn feature_file_header_layout() {
        let w = world(0, 0.3);
        let d = sample_dataset(&w, 1, 0).unwrap().subset(&[0]);
        let bytes = encode_features(&d).unwrap();
        assert_eq!(&bytes[..4], b"CGF1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 32);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 25);
        assert!(bytes[20..].starts_with(b"attr0\tobj0\nattr0\tobj1\n"));
    }

    #[test]
    fn split_and_vocabulary_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let w = world(0, 0.3);
        let s = make_generalized_split(&w, GeneralizedCounts::for_label_space(25), 2).unwrap();
        let p = dir.path().join("split.txt");
        write_split(&s, &p).unwrap();
        assert_eq!(read_split(&p).unwrap(), s);

        let vp = dir.path().join("vocab.txt");
        write_vocabulary(&w.vocabulary(), &vp).unwrap();
        assert_eq!(read_vocabulary(&vp).unwrap(), w.vocabulary());
    }
}
