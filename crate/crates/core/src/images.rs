//! Image catalog and six-tile selection challenges.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::ledger::SessionId;

hex_newtype!(CaptchaId, 16);

pub const TILE_COUNT: usize = 6;
pub const MIN_CATEGORIES: usize = 2;
pub const MIN_ASSETS_PER_CATEGORY: usize = 4;
pub const TARGET_SIZES: [usize; 2] = [2, 3];
pub const DEFAULT_CHALLENGE_TTL_MS: u64 = 120_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Png,
    Jpeg,
}

impl ImageFormat {
    pub fn sniff(bytes: &[u8]) -> Option<Self> {
        if bytes.starts_with(&[0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a]) {
            Some(ImageFormat::Png)
        } else if bytes.starts_with(&[0xff, 0xd8, 0xff]) {
            Some(ImageFormat::Jpeg)
        } else {
            None
        }
    }

    pub fn content_type(self) -> &'static str {
        match self {
            ImageFormat::Png => "image/png",
            ImageFormat::Jpeg => "image/jpeg",
        }
    }
}

#[derive(Clone)]
pub enum AssetSource {
    File(PathBuf),
    Memory(Arc<[u8]>),
}

impl fmt::Debug for AssetSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AssetSource::File(p) => f.debug_tuple("File").field(p).finish(),
            AssetSource::Memory(b) => write!(f, "Memory({} bytes)", b.len()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ImageAsset {
    pub id: String,
    pub category: String,
    pub source: AssetSource,
    pub format: ImageFormat,
    pub illusion: bool,
}

impl ImageAsset {
    pub fn in_memory(id: impl Into<String>, category: impl Into<String>, bytes: Vec<u8>) -> Option<Self> {
        let format = ImageFormat::sniff(&bytes)?;
        Some(Self {
            id: id.into(),
            category: category.into(),
            source: AssetSource::Memory(bytes.into()),
            format,
            illusion: false,
        })
    }

    pub fn read_bytes(&self) -> io::Result<Vec<u8>> {
        match &self.source {
            AssetSource::File(p) => fs::read(p),
            AssetSource::Memory(b) => Ok(b.to_vec()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Category {
    pub name: String,
    pub assets: Vec<ImageAsset>,
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("manifest {path}: {detail}")]
    ManifestMalformed { path: PathBuf, detail: String },
    #[error("asset `{asset_id}`: cannot read {path}: {source}")]
    AssetMissing {
        asset_id: String,
        path: PathBuf,
        source: io::Error,
    },
    #[error("asset `{asset_id}`: {path} is neither PNG nor JPEG")]
    UnsupportedFormat { asset_id: String, path: PathBuf },
    #[error("category `{category}` has {count} assets, need at least {MIN_ASSETS_PER_CATEGORY}")]
    CategoryTooSmall { category: String, count: usize },
    #[error("catalog has {0} categories, need at least {MIN_CATEGORIES}")]
    TooFewCategories(usize),
    #[error("duplicate {kind} `{name}`")]
    Duplicate { kind: &'static str, name: String },
}

/// Validated, immutable image bank.
#[derive(Debug, Clone)]
pub struct Catalog {
    categories: Vec<Category>,
}

impl Catalog {
    pub fn new(categories: Vec<Category>) -> Result<Self, CatalogError> {
        if categories.len() < MIN_CATEGORIES {
            return Err(CatalogError::TooFewCategories(categories.len()));
        }
        let mut names = HashSet::new();
        let mut ids = HashSet::new();
        for cat in &categories {
            if !names.insert(cat.name.as_str()) {
                return Err(CatalogError::Duplicate {
                    kind: "category",
                    name: cat.name.clone(),
                });
            }
            if cat.assets.len() < MIN_ASSETS_PER_CATEGORY {
                return Err(CatalogError::CategoryTooSmall {
                    category: cat.name.clone(),
                    count: cat.assets.len(),
                });
            }
            for a in &cat.assets {
                if !ids.insert(a.id.as_str()) {
                    return Err(CatalogError::Duplicate {
                        kind: "asset id",
                        name: a.id.clone(),
                    });
                }
            }
        }
        Ok(Self { categories })
    }

    /// In-memory catalog of rendered placeholder tiles.
    pub fn synthetic(category_names: &[&str], per_category: usize) -> Result<Self, CatalogError> {
        let categories = category_names
            .iter()
            .map(|name| Category {
                name: name.to_string(),
                assets: (0..per_category)
                    .map(|i| {
                        let bytes = crate::fixtures::render_tile(name, i as u32);
                        ImageAsset::in_memory(format!("{name}-{i:02}"), *name, bytes).expect("rendered tiles are PNG")
                    })
                    .collect(),
            })
            .collect();
        Self::new(categories)
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn asset_count(&self) -> usize {
        self.categories.iter().map(|c| c.assets.len()).sum()
    }

    pub fn asset(&self, at: AssetRef) -> &ImageAsset {
        &self.categories[at.category].assets[at.asset]
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestDoc {
    categories: Vec<ManifestCategory>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestCategory {
    name: String,
    assets: Vec<ManifestAsset>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestAsset {
    id: String,
    path: PathBuf,
    #[serde(default)]
    illusion: bool,
}

/// Loads a JSON manifest. Asset paths resolve relative to the manifest's directory.
pub fn load_catalog(manifest_path: &Path) -> Result<Catalog, CatalogError> {
    let malformed = |detail: String| CatalogError::ManifestMalformed {
        path: manifest_path.to_path_buf(),
        detail,
    };
    let text = fs::read_to_string(manifest_path).map_err(|e| malformed(e.to_string()))?;
    let doc: ManifestDoc = serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    let mut categories = Vec::with_capacity(doc.categories.len());
    for cat in doc.categories {
        if cat.name.trim().is_empty() {
            return Err(malformed("category with empty name".into()));
        }
        let mut assets = Vec::with_capacity(cat.assets.len());
        for a in cat.assets {
            if a.id.is_empty() {
                return Err(malformed(format!("asset with empty id in `{}`", cat.name)));
            }
            let path = base.join(&a.path);
            let mut head = [0u8; 8];
            let n = fs::File::open(&path)
                .and_then(|mut f| f.read(&mut head))
                .map_err(|source| CatalogError::AssetMissing {
                    asset_id: a.id.clone(),
                    path: path.clone(),
                    source,
                })?;
            let format = ImageFormat::sniff(&head[..n]).ok_or_else(|| CatalogError::UnsupportedFormat {
                asset_id: a.id.clone(),
                path: path.clone(),
            })?;
            assets.push(ImageAsset {
                id: a.id,
                category: cat.name.clone(),
                source: AssetSource::File(path),
                format,
                illusion: a.illusion,
            });
        }
        categories.push(Category { name: cat.name, assets });
    }
    Catalog::new(categories)
}

/// Position of an asset inside a [`Catalog`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AssetRef {
    pub category: usize,
    pub asset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no category arrangement can fill {TILE_COUNT} tiles")]
pub struct CatalogExhausted;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradeResult {
    Pass,
    Fail,
}

impl GradeResult {
    pub fn passed(self) -> bool {
        self == GradeResult::Pass
    }
}

#[derive(Debug, Clone)]
pub struct ImageChallenge {
    pub captcha_id: CaptchaId,
    pub tiles: [AssetRef; TILE_COUNT],
    pub prompt_category: String,
    /// Bit i set when tile i belongs to the prompt category. Never leaves the server.
    target_mask: u8,
    pub created_at: u64,
    pub ttl_ms: u64,
    pub attempts_remaining: u32,
}

impl ImageChallenge {
    pub fn target_indices(&self) -> Vec<usize> {
        (0..TILE_COUNT).filter(|i| self.target_mask & (1 << i) != 0).collect()
    }

    pub fn target_count(&self) -> usize {
        self.target_mask.count_ones() as usize
    }

    pub fn expires_at(&self) -> u64 {
        self.created_at.saturating_add(self.ttl_ms)
    }

    pub fn is_live(&self, now: u64) -> bool {
        now < self.expires_at() && self.attempts_remaining > 0
    }

    pub fn prompt(&self) -> String {
        format!("Select all images containing {}", self.prompt_category)
    }

    /// Exact-set grading. Every call spends an attempt, pass or fail.
    pub fn grade(&mut self, selections: &[usize], now: u64) -> GradeResult {
        let live = self.is_live(now);
        self.attempts_remaining = self.attempts_remaining.saturating_sub(1);
        if !live || !TARGET_SIZES.contains(&selections.len()) {
            return GradeResult::Fail;
        }
        let mut mask = 0u8;
        for &s in selections {
            if s >= TILE_COUNT || mask & (1 << s) != 0 {
                return GradeResult::Fail;
            }
            mask |= 1 << s;
        }
        if mask == self.target_mask {
            GradeResult::Pass
        } else {
            GradeResult::Fail
        }
    }
}

pub fn assemble_challenge<R: Rng + ?Sized>(
    catalog: &Catalog,
    rng: &mut R,
    now: u64,
    ttl_ms: u64,
) -> Result<ImageChallenge, CatalogExhausted> {
    assemble_challenge_with_k(catalog, rng, now, ttl_ms, None)
}

/// Like [`assemble_challenge`], optionally pinning the number of target tiles.
pub fn assemble_challenge_with_k<R: Rng + ?Sized>(
    catalog: &Catalog,
    rng: &mut R,
    now: u64,
    ttl_ms: u64,
    forced_k: Option<usize>,
) -> Result<ImageChallenge, CatalogExhausted> {
    let k = match forced_k {
        Some(k) if TARGET_SIZES.contains(&k) => k,
        Some(_) => return Err(CatalogExhausted),
        None => *TARGET_SIZES.choose(rng).expect("non-empty"),
    };
    let cats = catalog.categories();
    let total = catalog.asset_count();
    let feasible: Vec<usize> = (0..cats.len())
        .filter(|&c| cats[c].assets.len() >= k && total - cats[c].assets.len() >= TILE_COUNT - k)
        .collect();
    let &prompt = feasible.choose(rng).ok_or(CatalogExhausted)?;

    let mut tiles: Vec<(AssetRef, bool)> = rand::seq::index::sample(rng, cats[prompt].assets.len(), k)
        .into_iter()
        .map(|a| {
            (
                AssetRef {
                    category: prompt,
                    asset: a,
                },
                true,
            )
        })
        .collect();
    let decoy_pool: Vec<AssetRef> = cats
        .iter()
        .enumerate()
        .filter(|(c, _)| *c != prompt)
        .flat_map(|(c, cat)| (0..cat.assets.len()).map(move |a| AssetRef { category: c, asset: a }))
        .collect();
    tiles.extend(decoy_pool.choose_multiple(rng, TILE_COUNT - k).map(|r| (*r, false)));
    tiles.shuffle(rng);

    let mut refs = [AssetRef { category: 0, asset: 0 }; TILE_COUNT];
    let mut target_mask = 0u8;
    for (i, (r, is_target)) in tiles.into_iter().enumerate() {
        refs[i] = r;
        if is_target {
            target_mask |= 1 << i;
        }
    }
    Ok(ImageChallenge {
        captcha_id: CaptchaId::random(rng),
        tiles: refs,
        prompt_category: cats[prompt].name.clone(),
        target_mask,
        created_at: now,
        ttl_ms,
        attempts_remaining: 1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("need 1 <= k < n, got n={n}, k={k}")]
pub struct DomainError {
    pub n: u64,
    pub k: u64,
}

pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// Chance that one uniformly random admissible selection is exactly right.
///
/// With `attacker_knows_k` the guesser picks among the `C(n, k)` subsets of the
/// right size; otherwise among every subset of size 2 or 3.
pub fn random_guess_success_probability(
    n_tiles: u64,
    k_targets: u64,
    attacker_knows_k: bool,
) -> Result<f64, DomainError> {
    if k_targets < 1 || k_targets >= n_tiles {
        return Err(DomainError {
            n: n_tiles,
            k: k_targets,
        });
    }
    let space = if attacker_knows_k {
        binomial(n_tiles, k_targets)
    } else {
        TARGET_SIZES.iter().map(|&s| binomial(n_tiles, s as u64)).sum()
    };
    Ok(1.0 / space as f64)
}

struct LiveChallenge {
    challenge: ImageChallenge,
    session: SessionId,
}

/// Server-side store of issued challenges, keyed by captcha id.
///
/// Grading removes the challenge, so each id grades at most once no matter how
/// many requests race for it.
#[derive(Default)]
pub struct ChallengeBook {
    live: Mutex<HashMap<CaptchaId, LiveChallenge>>,
}

impl ChallengeBook {
    pub fn new() -> Self {
        Self::default()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<CaptchaId, LiveChallenge>> {
        self.live.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn insert(&self, challenge: ImageChallenge, session: SessionId) {
        self.lock()
            .insert(challenge.captcha_id, LiveChallenge { challenge, session });
    }

    pub fn grade(&self, captcha_id: CaptchaId, session: SessionId, selections: &[usize], now: u64) -> GradeResult {
        let mut live = self.lock();
        // A foreign session must not be able to burn the owner's attempt.
        if live.get(&captcha_id).is_none_or(|e| e.session != session) {
            return GradeResult::Fail;
        }
        let mut entry = live.remove(&captcha_id).expect("checked above");
        drop(live);
        entry.challenge.grade(selections, now)
    }

    /// Asset behind tile `index`, only while the challenge is live for this session.
    pub fn tile(&self, captcha_id: CaptchaId, session: SessionId, index: usize, now: u64) -> Option<AssetRef> {
        let live = self.lock();
        let entry = live.get(&captcha_id)?;
        (entry.session == session && entry.challenge.is_live(now) && index < TILE_COUNT)
            .then(|| entry.challenge.tiles[index])
    }

    pub fn purge_expired(&self, now: u64) -> usize {
        let mut live = self.lock();
        let before = live.len();
        live.retain(|_, e| e.challenge.is_live(now));
        before - live.len()
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
