//! The four prompting engines plus the rule engine driver: prompt
//! construction, answer parsing, vote aggregation, and heuristic path
//! selection.
//!
//! Prompts come from versioned template files with `{concept}`, `{text}`,
//! `{labels}`, and `{examples}` placeholders (the tree templates add
//! `{steps}`/`{step}`). Two line grammars are bit-exact external
//! contracts: `ANSWER: <label>` for final answers and
//! `SCORE: <decimal in [0,1]>` for step self-ratings.
//!
//! Self-consistency issues the chain-of-thought prompt over `sc_paths`
//! sampled paths with distinct seeds and takes the most frequent parsed
//! answer, ties broken by the smallest canonical ordinal. The tree engine
//! expands breadth-first for `depth` levels with `branching` candidate
//! steps per frontier node. Each candidate costs one generation call plus
//! one scoring call, issued per level as all generations (frontier order,
//! then branch order) followed by all scorings in the same candidate
//! order; a path's value is the mean of its step scores, unparseable
//! scores count 0.0, and the winner is the highest-valued complete path
//! with a parseable answer, earliest generated on ties.

use thiserror::Error;

use crate::backend::{complete_batch, Backend, BackendError, CompletionRequest};
use crate::context::{classify_rule, RuleTrace};
use crate::corpus::Corpus;
use crate::lexicon::Lexicon;
use crate::types::{
    AnnotatedInstance, AssertionLabel, EngineKind, Prediction, ReasoningTrace, TraceStep,
};

const SIMPLE_TEMPLATE: &str = include_str!("../templates/simple.txt");
const COT_TEMPLATE: &str = include_str!("../templates/cot.txt");
const TOT_EXPAND_TEMPLATE: &str = include_str!("../templates/tot_expand.txt");
const TOT_CONCLUDE_TEMPLATE: &str = include_str!("../templates/tot_conclude.txt");
const TOT_SCORE_TEMPLATE: &str = include_str!("../templates/tot_score.txt");

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("could not parse an answer from completion ending {excerpt:?}")]
    Unparseable { excerpt: String },
    #[error("all reasoning paths unparseable for instance {instance_id:?}")]
    AllPathsUnparseable { instance_id: String },
    #[error("engine {0} requires a backend")]
    BackendRequired(EngineKind),
    #[error("invalid strategy config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// A worked example placed before the query in few-shot prompts.
#[derive(Debug, Clone, PartialEq)]
pub struct Exemplar {
    pub instance: AnnotatedInstance,
    pub label: AssertionLabel,
}

/// Parameters for one engine run.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyConfig {
    pub strategy: EngineKind,
    /// Number of sampled reasoning paths the self-consistency vote runs
    /// over.
    pub sc_paths: usize,
    pub temperature_sc: f64,
    /// Candidate steps per frontier node in the tree engine.
    pub branching: usize,
    /// Levels in the tree engine.
    pub depth: usize,
    /// Offset added to per-path/per-call seeds, surfaced for
    /// reproducibility audits.
    pub seed_base: u64,
    pub few_shot: Vec<Exemplar>,
}

impl StrategyConfig {
    pub fn new(strategy: EngineKind) -> StrategyConfig {
        StrategyConfig {
            strategy,
            sc_paths: 5,
            temperature_sc: 0.7,
            branching: 2,
            depth: 2,
            seed_base: 0,
            few_shot: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), StrategyError> {
        if self.sc_paths == 0 {
            return Err(StrategyError::InvalidConfig("sc_paths must be >= 1".to_string()));
        }
        if self.branching == 0 || self.depth == 0 {
            return Err(StrategyError::InvalidConfig("branching and depth must be >= 1".to_string()));
        }
        if self.strategy == EngineKind::Sc && self.temperature_sc <= 0.0 {
            return Err(StrategyError::InvalidConfig(
                "self-consistency needs a sampling temperature > 0".to_string(),
            ));
        }
        Ok(())
    }
}

fn label_options() -> String {
    AssertionLabel::ALL.map(|l| l.name()).join(", ")
}

fn examples_block(few_shot: &[Exemplar]) -> String {
    let mut out = String::new();
    for exemplar in few_shot {
        out.push_str(&format!(
            "Note: {}\nConcept: {}\nANSWER: {}\n\n",
            exemplar.instance.text, exemplar.instance.concept.surface, exemplar.label
        ));
    }
    out
}

fn render(template: &str, instance: &AnnotatedInstance, few_shot: &[Exemplar]) -> String {
    template
        .replace("{examples}", &examples_block(few_shot))
        .replace("{text}", &instance.text)
        .replace("{concept}", &instance.concept.surface)
        .replace("{labels}", &label_options())
}

fn render_steps(steps: &[String]) -> String {
    if steps.is_empty() {
        "(none yet)".to_string()
    } else {
        steps
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{}. {}", i + 1, s))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Builds the opening request for a strategy. `simple` asks the question
/// directly; `cot` adds the step-by-step scaffold; `sc` is the `cot`
/// prompt at the sampling temperature; `tot` is the first tree expansion.
pub fn build_prompt(
    strategy: EngineKind,
    instance: &AnnotatedInstance,
    config: &StrategyConfig,
) -> Result<CompletionRequest, StrategyError> {
    config.validate()?;
    let user = match strategy {
        EngineKind::Simple => render(SIMPLE_TEMPLATE, instance, &config.few_shot),
        EngineKind::Cot => render(COT_TEMPLATE, instance, &config.few_shot),
        EngineKind::Sc => render(COT_TEMPLATE, instance, &config.few_shot),
        EngineKind::Tot => {
            render(TOT_EXPAND_TEMPLATE, instance, &[]).replace("{steps}", &render_steps(&[]))
        }
        EngineKind::Rule => {
            return Err(StrategyError::InvalidConfig("rule engine takes no prompt".to_string()))
        }
    };
    let mut request = CompletionRequest::new("", user);
    if strategy == EngineKind::Sc {
        request.temperature = config.temperature_sc;
    }
    Ok(request)
}

fn strip_answer_punctuation(s: &str) -> &str {
    s.trim_matches(|c: char| c.is_whitespace() || ".,!?:;\"'*()<>[]".contains(c))
}

/// Extracts the final label from a completion.
///
/// Primary rule: the last line of the form `ANSWER: <label>`
/// (case-insensitive). Fallback: the last standalone canonical label word
/// within the final 200 characters.
pub fn parse_answer(completion: &str) -> Result<AssertionLabel, StrategyError> {
    for line in completion.lines().rev() {
        let trimmed = line.trim();
        if trimmed.get(..7).is_some_and(|prefix| prefix.eq_ignore_ascii_case("answer:")) {
            if let Ok(label) = strip_answer_punctuation(&trimmed[7..]).parse::<AssertionLabel>() {
                return Ok(label);
            }
        }
    }

    let chars: Vec<char> = completion.chars().collect();
    let tail_start = chars.len().saturating_sub(200);
    let tail: String = chars[tail_start..].iter().collect::<String>().to_lowercase();
    let tail_chars: Vec<char> = tail.chars().collect();
    let mut best: Option<(usize, AssertionLabel)> = None;
    for label in AssertionLabel::ALL {
        let name: Vec<char> = label.name().chars().collect();
        let mut from = 0usize;
        while from + name.len() <= tail_chars.len() {
            if tail_chars[from..from + name.len()] == name[..] {
                let before_ok = from == 0 || !tail_chars[from - 1].is_alphanumeric();
                let after = from + name.len();
                let after_ok = after == tail_chars.len() || !tail_chars[after].is_alphanumeric();
                if before_ok && after_ok && best.is_none_or(|(pos, _)| from >= pos) {
                    best = Some((from, label));
                }
            }
            from += 1;
        }
    }
    match best {
        Some((_, label)) => Ok(label),
        None => {
            let excerpt: String = chars[chars.len().saturating_sub(80)..].iter().collect();
            Err(StrategyError::Unparseable { excerpt })
        }
    }
}

/// Extracts a `SCORE: <decimal>` self-rating in [0, 1] from a completion.
pub fn parse_score(completion: &str) -> Option<f64> {
    for line in completion.lines().rev() {
        let trimmed = line.trim();
        if trimmed.get(..6).is_some_and(|prefix| prefix.eq_ignore_ascii_case("score:")) {
            let value = strip_answer_punctuation(&trimmed[6..]).parse::<f64>().ok()?;
            return (value.is_finite() && (0.0..=1.0).contains(&value)).then_some(value);
        }
    }
    None
}

/// Majority vote: the most frequent label, ties broken by the smallest
/// canonical ordinal among the tied labels. `None` only for an empty vote
/// set.
pub fn aggregate_sc(votes: &[AssertionLabel]) -> Option<AssertionLabel> {
    if votes.is_empty() {
        return None;
    }
    let mut counts = [0usize; AssertionLabel::COUNT];
    for vote in votes {
        counts[vote.ordinal()] += 1;
    }
    let mut winner = AssertionLabel::Positive;
    let mut best = 0usize;
    for label in AssertionLabel::ALL {
        let count = counts[label.ordinal()];
        if count > best {
            best = count;
            winner = label;
        }
    }
    Some(winner)
}

/// One complete reasoning path with its parsed answer and heuristic value.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPath {
    pub steps: Vec<String>,
    pub label: AssertionLabel,
    pub score: f64,
}

/// Index of the path with the maximal score; ties resolve to the earliest
/// index. `None` only for an empty slice.
pub fn select_best_path(paths: &[ScoredPath]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (index, path) in paths.iter().enumerate() {
        match best {
            Some(current) if paths[current].score >= path.score => {}
            _ => best = Some(index),
        }
    }
    best
}

fn single_shot(
    strategy: EngineKind,
    instance: &AnnotatedInstance,
    config: &StrategyConfig,
    backend: &dyn Backend,
) -> Result<Prediction, StrategyError> {
    let request = build_prompt(strategy, instance, config)?.with_key(&instance.id, 0);
    let response = backend.complete(&request)?;
    let label = parse_answer(&response.text)?;
    Ok(Prediction {
        instance_id: instance.id.clone(),
        label,
        engine: strategy,
        trace: ReasoningTrace {
            steps: vec![TraceStep { prompt: request.user, completion: response.text }],
            votes: None,
            path_scores: None,
        },
    })
}

/// Self-consistency: `sc_paths` sampled chain-of-thought completions with
/// seeds `seed_base..seed_base + sc_paths`, majority vote over the parsed
/// answers. Unparseable paths drop out of the vote but stay in the trace.
pub fn run_sc(
    instance: &AnnotatedInstance,
    config: &StrategyConfig,
    backend: &dyn Backend,
    max_in_flight: usize,
) -> Result<Prediction, StrategyError> {
    let base = build_prompt(EngineKind::Sc, instance, config)?;
    let requests: Vec<CompletionRequest> = (0..config.sc_paths)
        .map(|path| {
            let mut request = base.clone().with_key(&instance.id, path as u32);
            request.seed = Some(config.seed_base + path as u64);
            request
        })
        .collect();
    let responses = complete_batch(backend, &requests, max_in_flight);

    let mut steps = Vec::with_capacity(config.sc_paths);
    let mut votes = Vec::new();
    for (request, response) in requests.iter().zip(responses) {
        let response = response?;
        if let Ok(label) = parse_answer(&response.text) {
            votes.push(label);
        }
        steps.push(TraceStep { prompt: request.user.clone(), completion: response.text });
    }
    let label = aggregate_sc(&votes)
        .ok_or_else(|| StrategyError::AllPathsUnparseable { instance_id: instance.id.clone() })?;
    Ok(Prediction {
        instance_id: instance.id.clone(),
        label,
        engine: EngineKind::Sc,
        trace: ReasoningTrace { steps, votes: Some(votes), path_scores: None },
    })
}

struct TreeNode {
    steps: Vec<String>,
    scores: Vec<f64>,
}

impl TreeNode {
    fn value(&self) -> f64 {
        if self.scores.is_empty() {
            0.0
        } else {
            self.scores.iter().sum::<f64>() / self.scores.len() as f64
        }
    }
}

/// Breadth-first tree search over reasoning steps with model self-scores.
pub fn run_tot(
    instance: &AnnotatedInstance,
    config: &StrategyConfig,
    backend: &dyn Backend,
) -> Result<Prediction, StrategyError> {
    config.validate()?;
    let mut call_index = 0u32;
    let mut steps_trace: Vec<TraceStep> = Vec::new();
    let mut call = |user: String| -> Result<String, StrategyError> {
        let mut request = CompletionRequest::new("", user).with_key(&instance.id, call_index);
        request.seed = Some(config.seed_base + call_index as u64);
        call_index += 1;
        let response = backend.complete(&request)?;
        steps_trace.push(TraceStep { prompt: request.user, completion: response.text.clone() });
        Ok(response.text)
    };

    let mut frontier = vec![TreeNode { steps: Vec::new(), scores: Vec::new() }];
    let mut complete: Vec<TreeNode> = Vec::new();
    for level in 1..=config.depth {
        let final_level = level == config.depth;
        let template = if final_level { TOT_CONCLUDE_TEMPLATE } else { TOT_EXPAND_TEMPLATE };

        // All expansions for this level, then all scorings, in candidate order.
        let mut candidates: Vec<TreeNode> = Vec::new();
        for node in &frontier {
            for _ in 0..config.branching {
                let prompt = render(template, instance, &[]).replace("{steps}", &render_steps(&node.steps));
                let text = call(prompt)?;
                let mut steps = node.steps.clone();
                steps.push(text.trim().to_string());
                candidates.push(TreeNode { steps, scores: node.scores.clone() });
            }
        }
        for node in &mut candidates {
            let step = node.steps.last().expect("candidate has a step").clone();
            let prompt = render(TOT_SCORE_TEMPLATE, instance, &[]).replace("{step}", &step);
            let text = call(prompt)?;
            // An unratable step scores 0.0; the raw completion stays in
            // the trace either way.
            node.scores.push(parse_score(&text).unwrap_or(0.0));
        }

        if final_level {
            complete = candidates;
        } else {
            let mut order: Vec<usize> = (0..candidates.len()).collect();
            order.sort_by(|&a, &b| {
                candidates[b]
                    .value()
                    .partial_cmp(&candidates[a].value())
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            let mut keep: Vec<usize> = order.into_iter().take(config.branching).collect();
            keep.sort_unstable();
            let mut kept = Vec::with_capacity(keep.len());
            let mut candidates = candidates;
            for index in keep.into_iter().rev() {
                kept.push(candidates.swap_remove(index));
            }
            kept.reverse();
            frontier = kept;
        }
    }

    let path_scores: Vec<f64> = complete.iter().map(TreeNode::value).collect();
    let paths: Vec<ScoredPath> = complete
        .iter()
        .filter_map(|node| {
            let label = parse_answer(node.steps.last()?).ok()?;
            Some(ScoredPath { steps: node.steps.clone(), label, score: node.value() })
        })
        .collect();
    let best = select_best_path(&paths)
        .ok_or_else(|| StrategyError::AllPathsUnparseable { instance_id: instance.id.clone() })?;
    Ok(Prediction {
        instance_id: instance.id.clone(),
        label: paths[best].label,
        engine: EngineKind::Tot,
        trace: ReasoningTrace { steps: steps_trace, votes: None, path_scores: Some(path_scores) },
    })
}

fn rule_trace(trace: &RuleTrace) -> ReasoningTrace {
    let steps = trace
        .fired
        .iter()
        .map(|fired| TraceStep {
            prompt: format!(
                "trigger {:?} ({}, {})",
                fired.trigger.phrase_text(),
                fired.trigger.dimension.map_or("termination".to_string(), |d| d.to_string()),
                fired.trigger.direction.name()
            ),
            completion: format!(
                "scope tokens {}..{}, covers concept: {}",
                fired.scope.start, fired.scope.end, fired.covers_concept
            ),
        })
        .collect();
    ReasoningTrace { steps, votes: None, path_scores: None }
}

/// Runs one engine over a whole corpus, one prediction slot per instance
/// in corpus order. Per-instance failures occupy their slot without
/// aborting the batch. The rule engine makes no backend calls.
pub fn run_engine(
    corpus: &Corpus,
    config: &StrategyConfig,
    lexicon: &Lexicon,
    backend: Option<&dyn Backend>,
    max_in_flight: usize,
) -> Result<Vec<Result<Prediction, StrategyError>>, StrategyError> {
    config.validate()?;
    if config.strategy == EngineKind::Rule {
        return Ok(corpus
            .instances
            .iter()
            .map(|instance| {
                let (label, trace) = classify_rule(instance, lexicon);
                Ok(Prediction {
                    instance_id: instance.id.clone(),
                    label,
                    engine: EngineKind::Rule,
                    trace: rule_trace(&trace),
                })
            })
            .collect());
    }
    let backend = backend.ok_or(StrategyError::BackendRequired(config.strategy))?;
    Ok(corpus
        .instances
        .iter()
        .map(|instance| match config.strategy {
            EngineKind::Simple => single_shot(EngineKind::Simple, instance, config, backend),
            EngineKind::Cot => single_shot(EngineKind::Cot, instance, config, backend),
            EngineKind::Sc => run_sc(instance, config, backend, max_in_flight),
            EngineKind::Tot => run_tot(instance, config, backend),
            EngineKind::Rule => unreachable!("rule handled above"),
        })
        .collect())
}
