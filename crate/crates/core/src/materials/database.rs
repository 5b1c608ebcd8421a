use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::material::{coefficient_at, AcousticMaterial, CoefficientCurve, CoefficientKind};

const BUILTIN: &str = include_str!("builtin.json");
pub const DATABASE_SCHEMA_VERSION: u32 = 1;

/// Named materials plus, per semantic category, the candidate materials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialDatabase {
    pub schema_version: u32,
    #[serde(default, rename = "_source", skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    /// Used for triangles whose category is missing or unmapped.
    pub default_material: String,
    pub materials: BTreeMap<String, AcousticMaterial>,
    #[serde(default)]
    pub category_to_material: BTreeMap<String, Vec<String>>,
}

impl MaterialDatabase {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN).expect("embedded material database is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let db: MaterialDatabase = serde_json::from_str(text)?;
        db.check()?;
        Ok(db)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("database serializes")
    }

    fn check(&self) -> Result<()> {
        if self.schema_version != DATABASE_SCHEMA_VERSION {
            return Err(Error::config(format!(
                "unsupported material database schema_version {}",
                self.schema_version
            )));
        }
        for (name, m) in &self.materials {
            m.validate().map_err(|e| Error::config(format!("material '{name}': {e}")))?;
        }
        if !self.materials.contains_key(&self.default_material) {
            return Err(Error::config(format!("default material '{}' is not defined", self.default_material)));
        }
        for (cat, list) in &self.category_to_material {
            if list.is_empty() {
                return Err(Error::config(format!("category '{cat}' has no candidate materials")));
            }
            if let Some(missing) = list.iter().find(|n| !self.materials.contains_key(*n)) {
                return Err(Error::config(format!("category '{cat}' references unknown material '{missing}'")));
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&AcousticMaterial> {
        self.materials.get(name)
    }

    /// Adds or replaces materials from another database and merges its category lists.
    pub fn extend(&mut self, other: MaterialDatabase) {
        self.materials.extend(other.materials);
        for (cat, list) in other.category_to_material {
            self.category_to_material.insert(cat, list);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum AssignmentPolicy {
    /// First candidate of each category.
    Fixed,
    /// Random candidate per category plus Gaussian noise on every coefficient.
    Randomized { seed: u64, noise_sigma: f64 },
    /// Every coefficient drawn uniformly from `[0, 1]`.
    Uniform { seed: u64 },
}

impl Default for AssignmentPolicy {
    fn default() -> Self {
        AssignmentPolicy::Fixed
    }
}

/// Resolved per-triangle materials.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialTable {
    pub names: Vec<String>,
    pub materials: Vec<AcousticMaterial>,
    /// Index into `materials` for each triangle.
    pub per_triangle: Vec<u32>,
    /// Triangles that fell back to the default material.
    pub defaulted_triangles: usize,
}

impl MaterialTable {
    /// Every triangle uses `material`.
    pub fn uniform(material: AcousticMaterial, triangle_count: usize) -> Self {
        MaterialTable {
            names: vec!["uniform".into()],
            materials: vec![material],
            per_triangle: vec![0; triangle_count],
            defaulted_triangles: 0,
        }
    }

    /// Explicit category mapping. Fails on a category with no entry when
    /// there is no default.
    pub fn from_mapping(
        categories: &[Option<String>],
        mapping: &BTreeMap<String, AcousticMaterial>,
        default: Option<&AcousticMaterial>,
    ) -> Result<Self> {
        let mut names: Vec<String> = mapping.keys().cloned().collect();
        let mut materials: Vec<AcousticMaterial> = mapping.values().cloned().collect();
        let default_index = default.map(|m| {
            names.push("default".into());
            materials.push(m.clone());
            (materials.len() - 1) as u32
        });
        let mut per_triangle = Vec::with_capacity(categories.len());
        let mut defaulted = 0;
        for (t, cat) in categories.iter().enumerate() {
            let idx = cat.as_ref().and_then(|c| mapping.keys().position(|k| k == c));
            match (idx, default_index) {
                (Some(i), _) => per_triangle.push(i as u32),
                (None, Some(d)) => {
                    defaulted += 1;
                    per_triangle.push(d)
                }
                (None, None) => {
                    return Err(Error::config(format!(
                        "triangle {t} has category {:?} with no material mapping and no default",
                        cat.as_deref().unwrap_or("<none>")
                    )))
                }
            }
        }
        Ok(MaterialTable { names, materials, per_triangle, defaulted_triangles: defaulted })
    }
}

/// Assigns a material to every triangle according to its semantic category.
pub fn resolve_assignment(
    db: &MaterialDatabase,
    categories: &[Option<String>],
    policy: AssignmentPolicy,
) -> Result<MaterialTable> {
    if let AssignmentPolicy::Randomized { noise_sigma, .. } = policy {
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::invalid("noise_sigma must be non-negative"));
        }
    }
    let mut rng = match policy {
        AssignmentPolicy::Fixed => ChaCha8Rng::seed_from_u64(0),
        AssignmentPolicy::Randomized { seed, .. } | AssignmentPolicy::Uniform { seed } => {
            ChaCha8Rng::seed_from_u64(seed)
        }
    };

    // Sorted distinct categories so the random draws do not depend on triangle order.
    let distinct: BTreeSet<&str> = categories.iter().flatten().map(String::as_str).collect();
    let mut names = Vec::new();
    let mut materials = Vec::new();
    let mut slot: BTreeMap<&str, u32> = BTreeMap::new();
    for cat in &distinct {
        let Some(candidates) = db.category_to_material.get(*cat) else {
            continue;
        };
        let pick = match policy {
            AssignmentPolicy::Fixed => 0,
            _ => rng.random_range(0..candidates.len()),
        };
        let name = &candidates[pick];
        let base = &db.materials[name];
        slot.insert(cat, materials.len() as u32);
        names.push(name.clone());
        materials.push(perturb(base, policy, &mut rng));
    }

    let mut unmapped: BTreeSet<&str> = BTreeSet::new();
    let mut default_slot = None;
    let mut per_triangle = Vec::with_capacity(categories.len());
    let mut defaulted = 0;
    for cat in categories {
        if let Some(&i) = cat.as_deref().and_then(|c| slot.get(c)) {
            per_triangle.push(i);
            continue;
        }
        if let Some(c) = cat {
            unmapped.insert(c.as_str());
        }
        defaulted += 1;
        let d = *default_slot.get_or_insert_with(|| {
            names.push(db.default_material.clone());
            materials.push(perturb(&db.materials[&db.default_material], policy, &mut rng));
            (materials.len() - 1) as u32
        });
        per_triangle.push(d);
    }
    if !unmapped.is_empty() {
        warn!(
            "categories without a material mapping use '{}': {}",
            db.default_material,
            unmapped.into_iter().collect::<Vec<_>>().join(", ")
        );
    }
    Ok(MaterialTable { names, materials, per_triangle, defaulted_triangles: defaulted })
}

fn perturb(base: &AcousticMaterial, policy: AssignmentPolicy, rng: &mut ChaCha8Rng) -> AcousticMaterial {
    let mut m = base.clone();
    match policy {
        AssignmentPolicy::Fixed => return m,
        AssignmentPolicy::Randomized { noise_sigma, .. } => {
            let normal = Normal::new(0.0, noise_sigma).expect("sigma checked");
            for kind in [CoefficientKind::Absorption, CoefficientKind::Scattering, CoefficientKind::Transmission] {
                for p in m.curve_mut(kind).points_mut() {
                    p.1 = (p.1 + normal.sample(rng)).clamp(0.0, 1.0);
                }
            }
        }
        AssignmentPolicy::Uniform { .. } => {
            for kind in [CoefficientKind::Absorption, CoefficientKind::Scattering, CoefficientKind::Transmission] {
                let curve = m.curve_mut(kind);
                if curve.is_empty() {
                    *curve = CoefficientCurve::constant(0.0);
                }
                for p in curve.points_mut() {
                    p.1 = rng.random::<f64>();
                }
            }
        }
    }
    enforce_energy_bound(&mut m);
    m
}

/// Lowers transmission where absorption plus transmission would exceed one.
pub(crate) fn enforce_energy_bound(m: &mut AcousticMaterial) {
    if m.transmission.is_empty() {
        return;
    }
    let mut freqs: Vec<f64> = m.absorption.points().iter().chain(m.transmission.points()).map(|p| p.0).collect();
    freqs.sort_by(f64::total_cmp);
    freqs.dedup();
    let violates = freqs.iter().any(|&f| {
        coefficient_at(m, CoefficientKind::Absorption, f) + coefficient_at(m, CoefficientKind::Transmission, f) > 1.0
    });
    if !violates {
        return;
    }
    // Both curves are piecewise linear on the union of breakpoints, so
    // clamping there bounds the sum everywhere.
    let points = freqs
        .iter()
        .map(|&f| {
            let a = coefficient_at(m, CoefficientKind::Absorption, f);
            let t = coefficient_at(m, CoefficientKind::Transmission, f);
            (f, t.min(1.0 - a).max(0.0))
        })
        .collect();
    m.transmission = CoefficientCurve::new(points);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cats(v: &[Option<&str>]) -> Vec<Option<String>> {
        v.iter().map(|c| c.map(String::from)).collect()
    }

    #[test]
    fn builtin_database() {
        let db = MaterialDatabase::builtin();
        assert_eq!(db.materials.len(), 29);
        assert!(db.source.is_some());
        let again = MaterialDatabase::from_json(&db.to_json()).unwrap();
        assert_eq!(again, db);
    }

    #[test]
    fn fixed_uses_first_candidate_and_default() {
        let db = MaterialDatabase::builtin();
        let c = cats(&[Some("floor"), Some("wall"), Some("spaceship"), None, Some("floor")]);
        let t = resolve_assignment(&db, &c, AssignmentPolicy::Fixed).unwrap();
        assert_eq!(t.per_triangle.len(), 5);
        assert_eq!(t.names[t.per_triangle[0] as usize], "wood_floor");
        assert_eq!(t.per_triangle[0], t.per_triangle[4]);
        assert_eq!(t.names[t.per_triangle[2] as usize], db.default_material);
        assert_eq!(t.defaulted_triangles, 2);
    }

    #[test]
    fn mapping_without_default_errors() {
        let mut map = BTreeMap::new();
        map.insert("wall".to_string(), AcousticMaterial::constant(0.2, 0.1, 0.0));
        let c = cats(&[Some("wall"), Some("floor")]);
        assert!(MaterialTable::from_mapping(&c, &map, None).is_err());
        let t = MaterialTable::from_mapping(&c, &map, Some(&AcousticMaterial::default())).unwrap();
        assert_eq!(t.per_triangle, vec![0, 1]);
    }

    #[test]
    fn randomized_is_seeded() {
        let db = MaterialDatabase::builtin();
        let c = cats(&[Some("floor"), Some("wall"), Some("ceiling")]);
        let p = AssignmentPolicy::Randomized { seed: 9, noise_sigma: 0.1 };
        let a = resolve_assignment(&db, &c, p).unwrap();
        let b = resolve_assignment(&db, &c, p).unwrap();
        assert_eq!(a, b);
        for m in &a.materials {
            m.validate().unwrap();
        }
    }

    #[test]
    fn uniform_draws_stay_valid() {
        let db = MaterialDatabase::builtin();
        let c = cats(&[Some("window"), Some("plant"), Some("curtain")]);
        for seed in 0..50 {
            let t = resolve_assignment(&db, &c, AssignmentPolicy::Uniform { seed }).unwrap();
            for m in &t.materials {
                m.validate().unwrap();
            }
        }
    }

    #[test]
    fn rejects_dangling_candidate() {
        let mut db = MaterialDatabase::builtin();
        db.category_to_material.insert("x".into(), vec!["nope".into()]);
        assert!(MaterialDatabase::from_json(&db.to_json()).is_err());
    }
}
