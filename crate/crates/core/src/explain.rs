//! Prompt construction and response parsing for LLM-written rule explanations.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analytics::RuleProfile;
use crate::error::ExplainError;
use crate::model::{ItemSet, Rule, TimeSlice};

pub const DEFAULT_MODEL: &str = "gemini-2.0-flash";
pub const DEFAULT_DATASET_NOUN: &str = "spatiotemporal events dataset";
pub const DEFAULT_LOCATION_COUNT: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub label: String,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExplainRequest {
    pub rule: Rule,
    pub locations: Vec<String>,
    /// place -> counts in slice order
    pub series: BTreeMap<String, Vec<SeriesPoint>>,
    pub dataset_noun: String,
}

impl ExplainRequest {
    pub fn validate(&self) -> Result<(), ExplainError> {
        if self.locations.is_empty() {
            return Err(ExplainError::EmptyContext);
        }
        if let Some(place) = self.series.keys().find(|p| !self.locations.contains(p)) {
            return Err(ExplainError::InvalidRequest(format!(
                "series place {place:?} is not a selected location"
            )));
        }
        Ok(())
    }
}

/// User overrides for the explanation scope.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ContextSelection {
    pub places: Option<Vec<String>>,
    /// Inclusive slice index range.
    pub slice_range: Option<(usize, usize)>,
}

/// Top places by occurrence count (ties by place id), zero-count places excluded.
pub fn top_places(profile: &RuleProfile, k: usize) -> Vec<String> {
    let mut places: Vec<(&String, u64)> = profile
        .place_totals
        .iter()
        .filter(|(_, &c)| c > 0)
        .map(|(p, &c)| (p, c))
        .collect();
    places.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    places.into_iter().take(k).map(|(p, _)| p.clone()).collect()
}

/// Locations default to the three busiest places; series default to every slice.
pub fn select_default_context(
    rule: &Rule,
    profile: &RuleProfile,
    slices: &[TimeSlice],
    selection: &ContextSelection,
    dataset_noun: &str,
) -> ExplainRequest {
    let locations = selection
        .places
        .clone()
        .unwrap_or_else(|| top_places(profile, DEFAULT_LOCATION_COUNT));
    let (lo, hi) = selection
        .slice_range
        .unwrap_or((0, slices.len().saturating_sub(1)));
    let series = locations
        .iter()
        .map(|place| {
            let points = slices
                .iter()
                .filter(|s| s.index >= lo && s.index <= hi)
                .map(|s| SeriesPoint {
                    label: s.label.clone(),
                    count: profile.cell(s.index, place),
                })
                .collect();
            (place.clone(), points)
        })
        .collect();
    ExplainRequest {
        rule: rule.clone(),
        locations,
        series,
        dataset_noun: dataset_noun.to_string(),
    }
}

fn braced(side: &ItemSet) -> String {
    let items: Vec<String> = side.iter().map(|i| i.to_string()).collect();
    format!("{{{}}}", items.join(", "))
}

const TASKS: &str = "\
Tasks:
1. Identify trends both in time and space.
2. Formulate a couple specific hypotheses explaining the identified behavior.
3. Search the internet for information sources to validate your hypothesis.
3. Use the Google Search tool to find specific news articles, reports, and studies
4. Provide actual working URLs, not placeholder URLs.

If no information was found, just return the hypothesis and description.

Output the findings as a JSON list of dictionaries with the following format (strictly valid JSON only):
{
    \"hypothesis\": \"\",
    \"description\": \"\",
    \"sources\": []
}
Output each source as a JSON dictionary with title and URL:
{
    \"title\": \"\",
    \"url\": \"\"
}
";

/// Renders the explanation prompt. Pure: equal requests give identical text.
pub fn build_prompt(req: &ExplainRequest) -> Result<String, ExplainError> {
    req.validate()?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Here we have an association rule, describing a pattern found in a {}. \
         Each element in the antecedent or consequent is an attribute\u{2013}value pair.",
        req.dataset_noun
    );
    out.push('\n');
    let _ = writeln!(out, "Antecedent: {}", braced(req.rule.antecedent()));
    let _ = writeln!(out, "Consequent: {}", braced(req.rule.consequent()));
    out.push('\n');
    for place in &req.locations {
        let _ = writeln!(out, "Location:{place}");
        for p in req.series.get(place).map(Vec::as_slice).unwrap_or_default() {
            let _ = writeln!(out, "{}: {}", p.label, p.count);
        }
    }
    out.push('\n');
    out.push_str(TASKS);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Source {
    pub title: String,
    pub url: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub hypothesis: String,
    pub description: String,
    pub sources: Vec<Source>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Explanation {
    pub hypotheses: Vec<Hypothesis>,
}

fn strip_fences(raw: &str) -> &str {
    let t = raw.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let rest = rest.trim_start_matches(|c: char| c.is_ascii_alphanumeric());
    rest.trim_end().strip_suffix("```").unwrap_or(rest).trim()
}

fn string_field(
    obj: &serde_json::Map<String, serde_json::Value>,
    key: &str,
    index: usize,
) -> Result<String, ExplainError> {
    obj.get(key)
        .and_then(|v| v.as_str())
        .map(str::to_string)
        .ok_or_else(|| ExplainError::WrongShape(format!("element {index} has no string {key:?}")))
}

/// Parses a completion holding a JSON array of hypotheses, optionally inside a
/// code fence. Sources whose URL is not absolute are dropped.
pub fn parse_explanation(raw: &str) -> Result<Explanation, ExplainError> {
    let value: serde_json::Value = serde_json::from_str(strip_fences(raw))
        .map_err(|e| ExplainError::NotJson(e.to_string()))?;
    let array = value
        .as_array()
        .ok_or_else(|| ExplainError::WrongShape("top level is not an array".into()))?;
    let mut hypotheses = Vec::with_capacity(array.len());
    for (i, element) in array.iter().enumerate() {
        let obj = element
            .as_object()
            .ok_or_else(|| ExplainError::WrongShape(format!("element {i} is not an object")))?;
        let hypothesis = string_field(obj, "hypothesis", i)?;
        let description = string_field(obj, "description", i)?;
        let mut sources = Vec::new();
        match obj.get("sources") {
            None | Some(serde_json::Value::Null) => {}
            Some(serde_json::Value::Array(items)) => {
                for s in items {
                    let s = s.as_object().ok_or_else(|| {
                        ExplainError::WrongShape(format!("element {i} has a non-object source"))
                    })?;
                    let url = s
                        .get("url")
                        .or_else(|| s.get("URL"))
                        .and_then(|u| u.as_str());
                    let Some(url) = url.filter(|u| url::Url::parse(u).is_ok()) else {
                        continue;
                    };
                    let title = s.get("title").and_then(|t| t.as_str()).unwrap_or_default();
                    sources.push(Source {
                        title: title.to_string(),
                        url: url.to_string(),
                    });
                }
            }
            Some(_) => {
                return Err(ExplainError::WrongShape(format!(
                    "element {i} sources is not an array"
                )))
            }
        }
        hypotheses.push(Hypothesis {
            hypothesis,
            description,
            sources,
        });
    }
    Ok(Explanation { hypotheses })
}

/// Text completion backend: prompt in, completion out.
pub trait TextProvider: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, ExplainError>;
}

/// Returns the same completion for every prompt.
#[derive(Clone, Debug)]
pub struct StaticProvider(pub String);

impl TextProvider for StaticProvider {
    fn complete(&self, _prompt: &str) -> Result<String, ExplainError> {
        Ok(self.0.clone())
    }
}

pub fn explain(
    req: &ExplainRequest,
    provider: &dyn TextProvider,
) -> Result<Explanation, ExplainError> {
    let prompt = build_prompt(req)?;
    let raw = provider.complete(&prompt)?;
    parse_explanation(&raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_util::rule;

    fn profile(places: &[(&str, u64)]) -> RuleProfile {
        RuleProfile {
            key: "k".into(),
            place_totals: places.iter().map(|&(p, c)| (p.to_string(), c)).collect(),
            grand_total: places.iter().map(|p| p.1).sum(),
            ..Default::default()
        }
    }

    #[test]
    fn busiest_three_places() {
        let p = profile(&[("TX", 61), ("FL", 27), ("CA", 40), ("NY", 5)]);
        assert_eq!(top_places(&p, 3), vec!["TX", "CA", "FL"]);
        let few = profile(&[("TX", 1), ("FL", 0)]);
        assert_eq!(top_places(&few, 3), vec!["TX"]);
        let tie = profile(&[("b", 2), ("a", 2), ("c", 2), ("d", 2)]);
        assert_eq!(top_places(&tie, 3), vec!["a", "b", "c"]);
    }

    #[test]
    fn empty_locations_rejected() {
        let req = ExplainRequest {
            rule: rule(&["A:x"], &["B:y"]),
            locations: vec![],
            series: BTreeMap::new(),
            dataset_noun: "x".into(),
        };
        assert_eq!(build_prompt(&req).unwrap_err(), ExplainError::EmptyContext);
    }

    #[test]
    fn series_must_match_locations() {
        let req = ExplainRequest {
            rule: rule(&["A:x"], &["B:y"]),
            locations: vec!["TX".into()],
            series: BTreeMap::from([("FL".into(), vec![])]),
            dataset_noun: "x".into(),
        };
        assert!(matches!(
            build_prompt(&req),
            Err(ExplainError::InvalidRequest(_))
        ));
    }

    #[test]
    fn parses_minimal_array() {
        let e =
            parse_explanation(r#"[{"hypothesis":"h","description":"d","sources":[]}]"#).unwrap();
        assert_eq!(e.hypotheses.len(), 1);
        assert!(e.hypotheses[0].sources.is_empty());
    }

    #[test]
    fn fence_variants() {
        let body = r#"[{"hypothesis":"h","description":"d","sources":[{"title":"t","url":"https://example.org/a"}]}]"#;
        let plain = parse_explanation(body).unwrap();
        for wrapped in [
            format!("```json\n{body}\n```"),
            format!("```json {body} ```"),
            format!("```\n{body}\n```\n"),
            format!("  ```JSON\n{body}```"),
        ] {
            assert_eq!(parse_explanation(&wrapped).unwrap(), plain, "{wrapped}");
        }
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(
            parse_explanation(r#"{"hypothesis": "h"}"#),
            Err(ExplainError::WrongShape(_))
        ));
        assert!(matches!(
            parse_explanation(r#"[{"hypothesis": "h"}]"#),
            Err(ExplainError::WrongShape(_))
        ));
        assert!(matches!(
            parse_explanation(r#"[1]"#),
            Err(ExplainError::WrongShape(_))
        ));
        assert!(matches!(
            parse_explanation("Sure! Here you go: []"),
            Err(ExplainError::NotJson(_))
        ));
    }

    #[test]
    fn missing_sources_and_bad_urls() {
        let e = parse_explanation(
            r#"[{"hypothesis":"h","description":"d"},
                {"hypothesis":"h2","description":"d2","sources":[{"title":"ok","URL":"https://a.example/x"},{"title":"bad","url":"/relative"},{"title":"none"}]}]"#,
        )
        .unwrap();
        assert!(e.hypotheses[0].sources.is_empty());
        assert_eq!(
            e.hypotheses[1].sources,
            vec![Source {
                title: "ok".into(),
                url: "https://a.example/x".into()
            }]
        );
    }

    #[test]
    fn explain_uses_provider() {
        let req = ExplainRequest {
            rule: rule(&["A:x"], &["B:y"]),
            locations: vec!["TX".into()],
            series: BTreeMap::from([(
                "TX".into(),
                vec![SeriesPoint {
                    label: "2016-01".into(),
                    count: 3,
                }],
            )]),
            dataset_noun: "x".into(),
        };
        let provider =
            StaticProvider(r#"[{"hypothesis":"h","description":"d","sources":[]}]"#.into());
        assert_eq!(
            explain(&req, &provider).unwrap().hypotheses[0].hypothesis,
            "h"
        );

        struct Down;
        impl TextProvider for Down {
            fn complete(&self, _: &str) -> Result<String, ExplainError> {
                Err(ExplainError::ProviderUnavailable("offline".into()))
            }
        }
        assert!(matches!(
            explain(&req, &Down),
            Err(ExplainError::ProviderUnavailable(_))
        ));
    }
}
