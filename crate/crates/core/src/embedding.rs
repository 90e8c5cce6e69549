//! Fixed-dimensional feature vectors keyed by image id.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::series::format_sig9;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    entries: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        Ok(EmbeddingStore {
            dim,
            entries: BTreeMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::invalid(format!(
                "embedding for `{id}` has dimension {}, store has {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("embedding for `{id}` is not finite")));
        }
        if self.entries.contains_key(&id) {
            return Err(Error::invalid(format!("duplicate embedding id `{id}`")));
        }
        self.entries.insert(id, vector);
        Ok(())
    }

    pub fn lookup(&self, id: &str) -> Result<&[f64]> {
        self.entries
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingEmbedding(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    /// Parses `image_id,f0,..,f{d-1}`; the first data row fixes `d`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.get(0) != Some("image_id") {
            return Err(Error::invalid("embedding csv must start with an `image_id` column"));
        }
        let mut store: Option<EmbeddingStore> = None;
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = row + 2;
            let dim = rec.len().saturating_sub(1);
            let st = match &mut store {
                Some(st) => st,
                None => store.insert(
                    EmbeddingStore::new(dim)
                        .map_err(|_| Error::invalid(format!("line {line}: row has no feature values")))?,
                ),
            };
            if dim != st.dim {
                return Err(Error::invalid(format!(
                    "line {line}: expected {} features, found {dim}",
                    st.dim
                )));
            }
            let id = rec[0].to_string();
            let values = rec
                .iter()
                .skip(1)
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| Error::invalid(format!("line {line}: cannot parse `{f}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            st.insert(id, values)
                .map_err(|e| Error::invalid(format!("line {line}: {e}")))?;
        }
        store.ok_or_else(|| Error::invalid("embedding file has no rows; dimension unknown"))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["image_id".to_string()];
        header.extend((0..self.dim).map(|i| format!("f{i}")));
        out.write_record(&header)?;
        for (id, v) in &self.entries {
            let mut row = Vec::with_capacity(self.dim + 1);
            row.push(id.clone());
            row.extend(v.iter().map(|x| format_sig9(*x)));
            out.write_record(&row)?;
        }
        out.flush().map_err(|e| Error::io("<embedding csv>", e))?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Parameters of the seeded two-blob generator: `seed,d,centroid-sep,noise-sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthEmbeddingSpec {
    pub seed: u64,
    pub dim: usize,
    pub centroid_sep: f64,
    pub noise_sigma: f64,
}

impl FromStr for SynthEmbeddingSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let bad = || Error::invalid(format!("expected `seed,d,centroid-sep,noise-sigma`, got `{s}`"));
        if parts.len() != 4 {
            return Err(bad());
        }
        let spec = SynthEmbeddingSpec {
            seed: parts[0].parse().map_err(|_| bad())?,
            dim: parts[1].parse().map_err(|_| bad())?,
            centroid_sep: parts[2].parse().map_err(|_| bad())?,
            noise_sigma: parts[3].parse().map_err(|_| bad())?,
        };
        if spec.dim == 0 || !(spec.noise_sigma >= 0.0) || !spec.centroid_sep.is_finite() {
            return Err(bad());
        }
        Ok(spec)
    }
}

impl SynthEmbeddingSpec {
    /// Class centroids `±(sep/2)·u` along a seeded random unit direction `u`.
    pub fn centroids(&self) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let u = random_unit(&mut rng, self.dim);
        let half = self.centroid_sep / 2.0;
        (
            u.iter().map(|x| x * half).collect(),
            u.iter().map(|x| -x * half).collect(),
        )
    }

    /// Draws one isotropic Gaussian vector per `(id, class)`; class `0`
    /// uses the first centroid, anything else the second.
    pub fn generate<'a>(&self, items: impl IntoIterator<Item = (&'a str, usize)>) -> Result<EmbeddingStore> {
        let (c0, c1) = self.centroids();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(1));
        let noise = Normal::new(0.0, self.noise_sigma).map_err(|e| Error::invalid(format!("noise sigma: {e}")))?;
        let mut store = EmbeddingStore::new(self.dim)?;
        for (id, class) in items {
            let c = if class == 0 { &c0 } else { &c1 };
            let v = c.iter().map(|m| m + noise.sample(&mut rng)).collect();
            store.insert(id, v)?;
        }
        Ok(store)
    }
}

pub(crate) fn random_unit<R: rand::Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}
