//! The product database: real-world food and beverage items with structured
//! nutrition panels, ingredient lists and marketing claims.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decimal::Decimal;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CatalogError {
    #[error("catalog document could not be parsed: {0}")]
    Parse(String),
    #[error("product id `{0}` appears more than once")]
    DuplicateProductId(String),
    #[error("catalog contains no products")]
    EmptyCatalog,
    #[error("product `{product}` nutrient `{key}`: {reason}")]
    InvalidNutrient {
        product: String,
        key: String,
        reason: String,
    },
    #[error("product `{product}`: {reason}")]
    InvalidProduct { product: String, reason: String },
    #[error("unknown product `{0}`")]
    UnknownProduct(String),
}

/// Unit of a labelled serving.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServingUnit {
    Ml,
    G,
}

impl ServingUnit {
    pub fn as_str(self) -> &'static str {
        match self {
            ServingUnit::Ml => "ml",
            ServingUnit::G => "g",
        }
    }
}

/// Unit of a nutrient amount. The set is closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NutrientUnit {
    G,
    Mg,
    Mcg,
    Kcal,
}

impl NutrientUnit {
    pub fn as_str(self) -> &'static str {
        match self {
            NutrientUnit::G => "g",
            NutrientUnit::Mg => "mg",
            NutrientUnit::Mcg => "mcg",
            NutrientUnit::Kcal => "kcal",
        }
    }

    fn parse(text: &str) -> Option<Self> {
        match text {
            "g" => Some(NutrientUnit::G),
            "mg" => Some(NutrientUnit::Mg),
            "mcg" => Some(NutrientUnit::Mcg),
            "kcal" => Some(NutrientUnit::Kcal),
            _ => None,
        }
    }
}

impl fmt::Display for NutrientUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Normalisation basis for nutrient amounts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// As labelled, per serving.
    PerServing,
    /// Per 100 ml for liquid servings, per 100 g for solid ones.
    #[serde(rename = "per_100")]
    Per100,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServingSpec {
    pub amount: Decimal,
    pub unit: ServingUnit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NutrientEntry {
    pub key: String,
    pub amount: Decimal,
    pub unit: NutrientUnit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub percent_dv: Option<Decimal>,
}

/// Ordered nutrition panel; keys are unique within one product.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NutritionFacts {
    pub entries: Vec<NutrientEntry>,
}

impl NutritionFacts {
    pub fn get(&self, key: &str) -> Option<&NutrientEntry> {
        self.entries.iter().find(|e| e.key == key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Product {
    pub id: String,
    pub name: String,
    pub category: String,
    pub serving: ServingSpec,
    pub nutrition: NutritionFacts,
    /// Label order.
    pub ingredients: Vec<String>,
    /// The "About this item" marketing copy.
    pub claims: Vec<String>,
    /// Opaque image paths; never decoded.
    pub image_refs: Vec<String>,
}

/// Immutable, id-keyed product collection in ingestion order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductCatalog {
    products: Vec<Product>,
    index: HashMap<String, usize>,
    source_digest: String,
}

// Wire forms. Units are read as free text so that an unknown unit surfaces as
// `InvalidNutrient` instead of a generic parse failure.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogDoc {
    products: Vec<ProductDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProductDoc {
    id: String,
    name: String,
    category: String,
    serving: ServingSpec,
    nutrition: Vec<NutrientDoc>,
    ingredients: Vec<String>,
    claims: Vec<String>,
    image_refs: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NutrientDoc {
    key: String,
    amount: Decimal,
    unit: String,
    #[serde(default)]
    percent_dv: Option<Decimal>,
}

#[derive(Serialize)]
struct CatalogDocOut<'a> {
    products: &'a [Product],
}

/// Lower-cases, trims and collapses internal whitespace. Synonyms are kept
/// as written.
pub fn canonical_nutrient_key(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl ProductDoc {
    fn into_product(self) -> Result<Product, CatalogError> {
        let id = self.id;
        if id.trim().is_empty() {
            return Err(CatalogError::InvalidProduct {
                product: id,
                reason: "id must not be empty".into(),
            });
        }
        if !self.serving.amount.is_positive() {
            return Err(CatalogError::InvalidProduct {
                product: id,
                reason: format!("serving amount must be positive, got {}", self.serving.amount),
            });
        }
        let mut entries: Vec<NutrientEntry> = Vec::with_capacity(self.nutrition.len());
        for raw in self.nutrition {
            let key = canonical_nutrient_key(&raw.key);
            let invalid = |reason: String| CatalogError::InvalidNutrient {
                product: id.clone(),
                key: key.clone(),
                reason,
            };
            if key.is_empty() {
                return Err(invalid("empty nutrient key".into()));
            }
            let unit =
                NutrientUnit::parse(raw.unit.trim()).ok_or_else(|| invalid(format!("unknown unit `{}`", raw.unit)))?;
            if raw.amount.is_negative() {
                return Err(invalid(format!("negative amount {}", raw.amount)));
            }
            if raw.percent_dv.is_some_and(|p| p.is_negative()) {
                return Err(invalid("negative percent_dv".into()));
            }
            if entries.iter().any(|e| e.key == key) {
                return Err(invalid("duplicate nutrient key".into()));
            }
            entries.push(NutrientEntry {
                key,
                amount: raw.amount,
                unit,
                percent_dv: raw.percent_dv,
            });
        }
        Ok(Product {
            id,
            name: self.name,
            category: self.category,
            serving: self.serving,
            nutrition: NutritionFacts { entries },
            ingredients: self.ingredients,
            claims: self.claims,
            image_refs: self.image_refs,
        })
    }
}

/// Parses and validates a catalog document.
pub fn load_catalog(source: &[u8]) -> Result<ProductCatalog, CatalogError> {
    let doc: CatalogDoc = serde_json::from_slice(source).map_err(|e| CatalogError::Parse(e.to_string()))?;
    if doc.products.is_empty() {
        return Err(CatalogError::EmptyCatalog);
    }
    let mut products = Vec::with_capacity(doc.products.len());
    let mut index = HashMap::with_capacity(doc.products.len());
    for raw in doc.products {
        let product = raw.into_product()?;
        if index.insert(product.id.clone(), products.len()).is_some() {
            return Err(CatalogError::DuplicateProductId(product.id));
        }
        products.push(product);
    }
    Ok(ProductCatalog {
        products,
        index,
        source_digest: sha256_hex(source),
    })
}

impl ProductCatalog {
    pub fn len(&self) -> usize {
        self.products.len()
    }

    pub fn is_empty(&self) -> bool {
        self.products.is_empty()
    }

    pub fn source_digest(&self) -> &str {
        &self.source_digest
    }

    /// Products in ingestion order.
    pub fn products(&self) -> &[Product] {
        &self.products
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn get_product(&self, id: &str) -> Result<&Product, CatalogError> {
        self.index
            .get(id)
            .map(|&i| &self.products[i])
            .ok_or_else(|| CatalogError::UnknownProduct(id.to_string()))
    }

    /// Category match is case-insensitive equality; keyword is a
    /// case-insensitive substring of the name or any claim.
    pub fn find_products(&self, category: Option<&str>, keyword: Option<&str>) -> Vec<&Product> {
        let category = category.map(|c| c.trim().to_lowercase()).filter(|c| !c.is_empty());
        let keyword = keyword.map(|k| k.trim().to_lowercase()).filter(|k| !k.is_empty());
        self.products
            .iter()
            .filter(|p| category.as_deref().is_none_or(|c| p.category.to_lowercase() == c))
            .filter(|p| {
                keyword.as_deref().is_none_or(|k| {
                    p.name.to_lowercase().contains(k) || p.claims.iter().any(|c| c.to_lowercase().contains(k))
                })
            })
            .collect()
    }

    /// Serializes back to the catalog document format.
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(&CatalogDocOut {
            products: &self.products,
        })
        .expect("catalog serialization is infallible");
        out.push(b'\n');
        out
    }
}

/// Scales a nutrient amount to the requested basis. Per-100 results are
/// rounded half-up to 2 places.
pub fn normalize_amount(entry: &NutrientEntry, serving: &ServingSpec, basis: Basis) -> Decimal {
    match basis {
        Basis::PerServing => entry.amount,
        Basis::Per100 => (entry.amount * Decimal::from_int(100) / serving.amount).round_half_up(2),
    }
}

/// Unrounded per-100 value, for callers that round later.
pub fn per_100_exact(entry: &NutrientEntry, serving: &ServingSpec) -> Decimal {
    entry.amount * Decimal::from_int(100) / serving.amount
}
