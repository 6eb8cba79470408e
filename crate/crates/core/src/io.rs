//! JSON instance files.
//!
//! ```json
//! {"n": 2, "m": 3, "k": 2, "players": [
//!   {"type": "coverage", "universe": [{"id": "a", "weight": 1.0}], "sets": {"1": ["a"], "2": [], "3": ["a"]}},
//!   {"type": "mrs", "terms": [{"weight": 2.0, "matroid": {"kind": "uniform", "rank": 1}}]}
//! ]}
//! ```
//!
//! Projects are labelled `1..=m` in files. Partition blocks list project
//! labels; a graphic matroid lists one edge `[u, v]` per project. Serializing
//! a parsed instance gives a canonical form that parses back to itself.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::Instance;
use crate::valuations::{CoveragePoint, Matroid, MatroidKind, MrsValuation, RankTerm, Representation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDoc {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub players: Vec<ValuationDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", try_from = "RawValuation")]
pub enum ValuationDoc {
    Coverage {
        universe: Vec<PointDoc>,
        /// Project label to the ids of the points it covers.
        #[serde(default)]
        sets: BTreeMap<ProjectLabel, Vec<String>>,
    },
    Mrs {
        terms: Vec<TermDoc>,
    },
}

/// A 1-based project label. JSON object keys are strings, so it is written
/// and read as a decimal string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProjectLabel(pub usize);

impl Serialize for ProjectLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for ProjectLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse()
            .map(ProjectLabel)
            .map_err(|_| serde::de::Error::custom(format!("project label {raw:?} is not a positive integer")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointDoc {
    pub id: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermDoc {
    pub weight: f64,
    pub matroid: MatroidDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", try_from = "RawMatroid")]
pub enum MatroidDoc {
    Uniform { rank: usize },
    Partition { blocks: Vec<Vec<usize>>, caps: Vec<usize> },
    Graphic { edges: Vec<(usize, usize)> },
}

// Tagged enums buffer their content, which hides field paths from the error
// reporter. The raw forms below are read field by field and then checked
// against their tag.

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ValuationTag {
    Coverage,
    Mrs,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawValuation {
    #[serde(rename = "type")]
    tag: ValuationTag,
    universe: Option<Vec<PointDoc>>,
    sets: Option<BTreeMap<ProjectLabel, Vec<String>>>,
    terms: Option<Vec<TermDoc>>,
}

fn misplaced(field: &str, tag: &str) -> String {
    format!("field `{field}` does not belong to {tag:?}")
}

impl TryFrom<RawValuation> for ValuationDoc {
    type Error = String;

    fn try_from(raw: RawValuation) -> std::result::Result<Self, String> {
        match raw.tag {
            ValuationTag::Coverage => {
                if raw.terms.is_some() {
                    return Err(misplaced("terms", "coverage"));
                }
                Ok(ValuationDoc::Coverage {
                    universe: raw.universe.ok_or("missing field `universe`")?,
                    sets: raw.sets.unwrap_or_default(),
                })
            }
            ValuationTag::Mrs => {
                if raw.universe.is_some() || raw.sets.is_some() {
                    let field = if raw.universe.is_some() { "universe" } else { "sets" };
                    return Err(misplaced(field, "mrs"));
                }
                Ok(ValuationDoc::Mrs {
                    terms: raw.terms.ok_or("missing field `terms`")?,
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
enum MatroidTag {
    Uniform,
    Partition,
    Graphic,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMatroid {
    kind: MatroidTag,
    rank: Option<usize>,
    blocks: Option<Vec<Vec<usize>>>,
    caps: Option<Vec<usize>>,
    edges: Option<Vec<(usize, usize)>>,
}

impl TryFrom<RawMatroid> for MatroidDoc {
    type Error = String;

    fn try_from(raw: RawMatroid) -> std::result::Result<Self, String> {
        let (name, allowed): (&str, &[&str]) = match raw.kind {
            MatroidTag::Uniform => ("uniform", &["rank"]),
            MatroidTag::Partition => ("partition", &["blocks", "caps"]),
            MatroidTag::Graphic => ("graphic", &["edges"]),
        };
        let present = [
            ("rank", raw.rank.is_some()),
            ("blocks", raw.blocks.is_some()),
            ("caps", raw.caps.is_some()),
            ("edges", raw.edges.is_some()),
        ];
        for (field, here) in present {
            if here && !allowed.contains(&field) {
                return Err(misplaced(field, name));
            }
        }
        let missing = |f: &str| format!("missing field `{f}`");
        Ok(match raw.kind {
            MatroidTag::Uniform => MatroidDoc::Uniform {
                rank: raw.rank.ok_or_else(|| missing("rank"))?,
            },
            MatroidTag::Partition => MatroidDoc::Partition {
                blocks: raw.blocks.ok_or_else(|| missing("blocks"))?,
                caps: raw.caps.ok_or_else(|| missing("caps"))?,
            },
            MatroidTag::Graphic => MatroidDoc::Graphic {
                edges: raw.edges.ok_or_else(|| missing("edges"))?,
            },
        })
    }
}

fn field_error(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::Input(format!("{path}: {msg}"))
}

fn check_weight(path: &str, w: f64) -> Result<()> {
    if !w.is_finite() || w < 0.0 {
        return Err(field_error(path, format!("weight must be finite and nonnegative, got {w}")));
    }
    Ok(())
}

fn label(path: &str, j: usize, m: usize) -> Result<usize> {
    if j == 0 || j > m {
        return Err(field_error(path, format!("project label {j} outside 1..={m}")));
    }
    Ok(j - 1)
}

impl ValuationDoc {
    pub fn build(&self, m: usize, path: &str) -> Result<MrsValuation> {
        let wrap = |e: Error| match e {
            Error::Input(msg) => field_error(path, msg),
            other => other,
        };
        match self {
            ValuationDoc::Coverage { universe, sets } => {
                let mut index = BTreeMap::new();
                for (p, point) in universe.iter().enumerate() {
                    check_weight(&format!("{path}.universe[{p}].weight"), point.weight)?;
                    if index.insert(point.id.as_str(), p).is_some() {
                        return Err(field_error(
                            &format!("{path}.universe[{p}].id"),
                            format!("duplicate point id {:?}", point.id),
                        ));
                    }
                }
                let mut project_sets = vec![Vec::new(); m];
                for (&ProjectLabel(j), ids) in sets {
                    let at = format!("{path}.sets.{j}");
                    let j = label(&at, j, m)?;
                    for id in ids {
                        let p = *index
                            .get(id.as_str())
                            .ok_or_else(|| field_error(&at, format!("unknown point id {id:?}")))?;
                        project_sets[j].push(p);
                    }
                }
                let points = universe
                    .iter()
                    .map(|p| CoveragePoint {
                        id: p.id.clone(),
                        weight: p.weight,
                    })
                    .collect();
                MrsValuation::coverage(m, points, project_sets).map_err(wrap)
            }
            ValuationDoc::Mrs { terms } => {
                let terms = terms
                    .iter()
                    .enumerate()
                    .map(|(t, term)| {
                        let at = format!("{path}.terms[{t}]");
                        check_weight(&format!("{at}.weight"), term.weight)?;
                        Ok(RankTerm {
                            weight: term.weight,
                            matroid: term.matroid.build(m, &format!("{at}.matroid"))?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                MrsValuation::from_terms(m, terms).map_err(wrap)
            }
        }
    }

    pub fn from_valuation(v: &MrsValuation) -> Self {
        match v.representation() {
            Representation::Coverage(cov) => ValuationDoc::Coverage {
                universe: cov
                    .points()
                    .iter()
                    .map(|p| PointDoc {
                        id: p.id.clone(),
                        weight: p.weight,
                    })
                    .collect(),
                sets: (0..v.ground())
                    .map(|j| {
                        let ids = cov.set(j).iter().map(|&p| cov.points()[p].id.clone()).collect();
                        (ProjectLabel(j + 1), ids)
                    })
                    .collect(),
            },
            Representation::Terms(terms) => ValuationDoc::Mrs {
                terms: terms
                    .iter()
                    .map(|t| TermDoc {
                        weight: t.weight,
                        matroid: MatroidDoc::from_matroid(&t.matroid),
                    })
                    .collect(),
            },
        }
    }
}

impl MatroidDoc {
    pub fn build(&self, m: usize, path: &str) -> Result<Matroid> {
        let wrap = |e: Error| match e {
            Error::Input(msg) => field_error(path, msg),
            other => other,
        };
        match self {
            MatroidDoc::Uniform { rank } => Matroid::uniform(m, *rank).map_err(wrap),
            MatroidDoc::Partition { blocks, caps } => {
                let blocks = blocks
                    .iter()
                    .enumerate()
                    .map(|(b, block)| {
                        block
                            .iter()
                            .map(|&j| label(&format!("{path}.blocks[{b}]"), j, m))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                Matroid::partition(m, blocks, caps.clone()).map_err(wrap)
            }
            MatroidDoc::Graphic { edges } => {
                if edges.len() != m {
                    return Err(field_error(
                        &format!("{path}.edges"),
                        format!("a graphic matroid needs one edge per project: {} edges for {m} projects", edges.len()),
                    ));
                }
                Ok(Matroid::graphic(edges.clone()))
            }
        }
    }

    pub fn from_matroid(matroid: &Matroid) -> Self {
        match matroid.kind() {
            MatroidKind::Uniform { rank } => MatroidDoc::Uniform { rank: *rank },
            MatroidKind::Partition { blocks, caps } => MatroidDoc::Partition {
                blocks: blocks
                    .iter()
                    .map(|b| b.iter().map(|j| j + 1).collect())
                    .collect(),
                caps: caps.clone(),
            },
            MatroidKind::Graphic { edges } => MatroidDoc::Graphic { edges: edges.clone() },
        }
    }
}

impl InstanceDoc {
    pub fn build(&self) -> Result<Instance> {
        if self.m == 0 {
            return Err(field_error("m", "there must be at least one project"));
        }
        if self.players.len() != self.n {
            return Err(field_error(
                "n",
                format!("declares {} players but {} are listed", self.n, self.players.len()),
            ));
        }
        if self.k == 0 || self.k > self.m {
            return Err(field_error("k", format!("k = {} must satisfy 1 <= k <= m = {}", self.k, self.m)));
        }
        let valuations = self
            .players
            .iter()
            .enumerate()
            .map(|(i, p)| p.build(self.m, &format!("players[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        Instance::new(self.k, valuations)
    }

    pub fn from_instance(instance: &Instance) -> Self {
        InstanceDoc {
            n: instance.n(),
            m: instance.m(),
            k: instance.k(),
            players: instance
                .valuations()
                .iter()
                .map(|v| ValuationDoc::from_valuation(v))
                .collect(),
        }
    }
}

/// Deserializes `text`, reporting the offending field path and position on failure.
pub fn from_json_str<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value: T = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let at = if path.is_empty() || path == "." || path == "?" { String::new() } else { format!("{path}: ") };
        Error::Input(format!("{at}{inner}"))
    })?;
    de.end().map_err(|e| Error::Input(e.to_string()))?;
    Ok(value)
}

pub fn parse_instance(text: &str) -> Result<Instance> {
    from_json_str::<InstanceDoc>(text)?.build()
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<Instance> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    parse_instance(&text)
}

/// Canonical pretty-printed JSON: fixed field order, projects in label order.
pub fn to_canonical_json(instance: &Instance) -> String {
    serde_json::to_string_pretty(&InstanceDoc::from_instance(instance))
        .expect("instance documents always serialize")
}

/// 64-bit FNV-1a of the compact canonical JSON, as 16 hex digits.
pub fn fingerprint(instance: &Instance) -> String {
    let text = serde_json::to_string(&InstanceDoc::from_instance(instance))
        .expect("instance documents always serialize");
    let hash = text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    });
    format!("{hash:016x}")
}
