use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ElicitError;

const PREAMBLE: &str = "Each of the questions below asks you to predict something, either a duration or a quantity, based on a single piece of information. Please read each question and respond only with your prediction on the line below it. We're interested in your intuitions, so please don't make complicated calculations; just tell us what you think! ";

const MOVIE_GROSS_QUESTION: &str = "Imagine you hear about a movie that has taken in {t} million dollars at the box office, but don't know how long it has been running. What would you predict for the total amount of box office intake for that movie? Predicted_number_of_million_dollars=";

/// A named elicitation scenario: prompt template, integer `t` grid, and the
/// marker the predictor is asked to answer after.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioDef {
    pub id: String,
    /// Prompt text with a single `{t}` placeholder.
    pub prompt_template: String,
    pub t_min: i64,
    pub t_max: i64,
    #[serde(default = "default_step")]
    pub t_step: i64,
    pub answer_marker: String,
    pub units: String,
    /// The shipped prompt is known not to match the scenario it names.
    #[serde(default)]
    pub non_canonical: bool,
}

fn default_step() -> i64 {
    1
}

impl ScenarioDef {
    pub fn validate(&self) -> Result<(), ElicitError> {
        let bad = |msg: String| {
            Err(ElicitError::InvalidScenario {
                id: self.id.clone(),
                reason: msg,
            })
        };
        if self.id.trim().is_empty() {
            return bad("id is empty".into());
        }
        let placeholders = self.prompt_template.matches("{t}").count();
        if placeholders != 1 {
            return bad(format!(
                "template must contain exactly one {{t}}, found {placeholders}"
            ));
        }
        if self.t_min < 1 {
            return bad(format!("t_min must be >= 1, got {}", self.t_min));
        }
        if self.t_min > self.t_max {
            return bad(format!("t_min {} exceeds t_max {}", self.t_min, self.t_max));
        }
        if self.t_step < 1 {
            return bad(format!("t_step must be >= 1, got {}", self.t_step));
        }
        if self.answer_marker.is_empty() {
            return bad("answer_marker is empty".into());
        }
        Ok(())
    }

    /// The `t` values queried, from `t_min` to `t_max` in steps of `t_step`.
    pub fn grid(&self) -> Vec<i64> {
        (self.t_min..=self.t_max)
            .step_by(self.t_step.max(1) as usize)
            .collect()
    }

    /// The template with `{t}` replaced by the decimal rendering of `t`.
    pub fn render_prompt(&self, t: i64) -> Result<String, ElicitError> {
        if t < self.t_min || t > self.t_max {
            return Err(ElicitError::OutOfRange {
                id: self.id.clone(),
                t,
                min: self.t_min,
                max: self.t_max,
            });
        }
        Ok(self.prompt_template.replacen("{t}", &t.to_string(), 1))
    }
}

/// Free-function form of [`ScenarioDef::render_prompt`].
pub fn render_prompt(scenario: &ScenarioDef, t: i64) -> Result<String, ElicitError> {
    scenario.render_prompt(t)
}

fn builtin(
    id: &str,
    question: &str,
    t_min: i64,
    t_max: i64,
    marker: &str,
    units: &str,
) -> ScenarioDef {
    ScenarioDef {
        id: id.to_string(),
        prompt_template: format!("{PREAMBLE}{question}"),
        t_min,
        t_max,
        t_step: 1,
        answer_marker: marker.to_string(),
        units: units.to_string(),
        non_canonical: false,
    }
}

/// The eight built-in everyday-prediction scenarios.
///
/// `lifespans` has no question of its own and reuses the movie-grosses
/// text; it is flagged `non_canonical` and can be replaced from a scenario file.
pub fn builtin_scenarios() -> Vec<ScenarioDef> {
    const MINUTES: &str = "Predicted_number_of_minutes=";
    const YEARS: &str = "Predicted_number_of_years=";
    const MILLIONS: &str = "Predicted_number_of_million_dollars=";
    let mut lifespans = builtin(
        "lifespans",
        MOVIE_GROSS_QUESTION,
        1,
        100,
        MILLIONS,
        "million dollars",
    );
    lifespans.non_canonical = true;
    vec![
        builtin(
            "cakes",
            "Imagine you are in somebody's kitchen and notice that a cake is in the oven. The timer shows that it has been baking for {t} minutes. What would you predict for the total amount of times the cake needs to bake? Predicted_number_of_minutes=",
            10,
            70,
            MINUTES,
            "minutes",
        ),
        lifespans,
        builtin("movie-grosses", MOVIE_GROSS_QUESTION, 1, 100, MILLIONS, "million dollars"),
        builtin(
            "movie-runtimes",
            "If you made a surprise visit to a friend, and found that they had been watching a movie for {t} minutes, what would you predict for the length of the movie? Predicted_number_of_minutes=",
            30,
            110,
            MINUTES,
            "minutes",
        ),
        builtin(
            "poems",
            "If your friend read you her favorite line of poetry, and told you it was line {t} of a poem, what would you predict for the total length of the poem? Predicted_number_of_lines=",
            2,
            67,
            "Predicted_number_of_lines=",
            "lines",
        ),
        builtin(
            "pharaohs",
            "If you opened a book about the history of ancient Egypt to a page listing the reigns of the pharaohs, and noticed that at 4000 BC a particular pharaoh had been ruling for {t} years, what would you predict for the total duration of his reign? Predicted_number_of_years=",
            1,
            23,
            YEARS,
            "years",
        ),
        builtin(
            "representatives",
            "If you heard a member of the U.S. House of Representative had served for {t} years, what would you predict his total in the House would be? Predicted_number_of_years=",
            1,
            31,
            YEARS,
            "years",
        ),
        builtin(
            "waiting-times",
            "If you were calling a telephone box office to book tickets and had been on hold for {t} minutes, what would you predict for the total time you would be on hold? Predicted_number_of_minutes=",
            1,
            23,
            MINUTES,
            "minutes",
        ),
    ]
}

#[derive(Debug, Deserialize)]
struct ScenarioFile {
    #[serde(default, rename = "scenario")]
    scenarios: Vec<ScenarioDef>,
}

/// Scenario definitions by id: the built-ins, optionally overridden or
/// extended from a TOML file of `[[scenario]]` tables.
#[derive(Debug, Clone)]
pub struct ScenarioRegistry {
    scenarios: BTreeMap<String, ScenarioDef>,
}

impl Default for ScenarioRegistry {
    fn default() -> Self {
        ScenarioRegistry {
            scenarios: builtin_scenarios()
                .into_iter()
                .map(|s| (s.id.clone(), s))
                .collect(),
        }
    }
}

impl ScenarioRegistry {
    pub fn load(path: Option<&Path>) -> Result<Self, ElicitError> {
        let mut registry = ScenarioRegistry::default();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ElicitError::ScenarioFile(format!("{}: {e}", path.display())))?;
            registry.merge_toml(&text)?;
        }
        Ok(registry)
    }

    pub fn merge_toml(&mut self, text: &str) -> Result<(), ElicitError> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| ElicitError::ScenarioFile(e.to_string()))?;
        for scenario in file.scenarios {
            scenario.validate()?;
            self.scenarios.insert(scenario.id.clone(), scenario);
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&ScenarioDef, ElicitError> {
        self.scenarios
            .get(id)
            .ok_or_else(|| ElicitError::UnknownScenario(id.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &ScenarioDef> {
        self.scenarios.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cakes() -> ScenarioDef {
        ScenarioRegistry::default().get("cakes").unwrap().clone()
    }

    #[test]
    fn builtins_are_valid() {
        let all = builtin_scenarios();
        assert_eq!(all.len(), 8);
        for s in &all {
            s.validate().unwrap();
            assert!(s.prompt_template.ends_with(&s.answer_marker), "{}", s.id);
        }
        let flagged: Vec<&str> = all
            .iter()
            .filter(|s| s.non_canonical)
            .map(|s| s.id.as_str())
            .collect();
        assert_eq!(flagged, vec!["lifespans"]);
    }

    #[test]
    fn cakes_prompt() {
        let p = cakes().render_prompt(10).unwrap();
        assert!(p.contains("has been baking for 10 minutes"));
        assert!(p.ends_with("Predicted_number_of_minutes="));
        assert!(p.starts_with("Each of the questions below"));
    }

    #[test]
    fn poem_prompt() {
        let poems = ScenarioRegistry::default().get("poems").unwrap().clone();
        assert!(poems.render_prompt(2).unwrap().contains("line 2 of a poem"));
        assert_eq!((poems.t_min, poems.t_max), (2, 67));
    }

    #[test]
    fn out_of_range_t() {
        assert!(matches!(
            cakes().render_prompt(9),
            Err(ElicitError::OutOfRange { t: 9, .. })
        ));
        assert!(matches!(
            cakes().render_prompt(71),
            Err(ElicitError::OutOfRange { t: 71, .. })
        ));
    }

    #[test]
    fn render_only_touches_placeholder() {
        let s = cakes();
        let (head, tail) = s.prompt_template.split_once("{t}").unwrap();
        let p = s.render_prompt(42).unwrap();
        assert_eq!(p, format!("{head}42{tail}"));
    }

    #[test]
    fn grid_sizes() {
        let r = ScenarioRegistry::default();
        let sizes: Vec<(String, usize)> =
            r.iter().map(|s| (s.id.clone(), s.grid().len())).collect();
        assert!(sizes.contains(&("cakes".into(), 61)));
        assert!(sizes.contains(&("movie-runtimes".into(), 81)));
        assert!(sizes.contains(&("pharaohs".into(), 23)));
        let mut stepped = cakes();
        stepped.t_step = 5;
        assert_eq!(stepped.grid().len(), 13);
    }

    #[test]
    fn template_needs_one_placeholder() {
        let mut s = cakes();
        s.prompt_template = "no placeholder".into();
        assert!(s.validate().is_err());
        s.prompt_template = "{t} and {t}".into();
        assert!(s.validate().is_err());
    }

    #[test]
    fn toml_overrides_builtin() {
        let mut r = ScenarioRegistry::default();
        r.merge_toml(
            r#"
            [[scenario]]
            id = "lifespans"
            prompt_template = "A man is {t} years old. How long will he live? Predicted_number_of_years="
            t_min = 1
            t_max = 100
            answer_marker = "Predicted_number_of_years="
            units = "years"
            "#,
        )
        .unwrap();
        let s = r.get("lifespans").unwrap();
        assert!(!s.non_canonical);
        assert_eq!(s.t_step, 1);
        assert!(s.render_prompt(40).unwrap().contains("40 years old"));
        assert!(r.get("nope").is_err());
    }
}
