//! Fairness tree: maps answers about the intervention context to the
//! metric subset an audit should weigh.
//!
//! The tree lives in `fairness_tree.json` so its structure can be revised
//! without touching the engine.

use std::collections::{BTreeMap, HashSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::Metric;

const BUILTIN_TREE: &str = include_str!("fairness_tree.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeAnswer {
    pub id: String,
    pub text: String,
    pub next: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Question {
        id: String,
        text: String,
        answers: Vec<TreeAnswer>,
    },
    Terminal {
        id: String,
        metrics: Vec<Metric>,
        rationale: String,
    },
}

impl TreeNode {
    pub fn id(&self) -> &str {
        match self {
            TreeNode::Question { id, .. } | TreeNode::Terminal { id, .. } => id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeDefinition {
    pub version: String,
    pub root: String,
    pub nodes: Vec<TreeNode>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("answer {answer:?} is not an option for question {question:?}")]
    InvalidAnswer { question: String, answer: String },
    #[error("the interview is already complete")]
    AlreadyTerminal,
    #[error("the interview is not complete yet")]
    NotTerminal,
    #[error("malformed tree definition: {0}")]
    Malformed(String),
}

impl TreeError {
    pub fn code(&self) -> &'static str {
        match self {
            TreeError::InvalidAnswer { .. } => "InvalidAnswer",
            TreeError::AlreadyTerminal => "AlreadyTerminal",
            TreeError::NotTerminal => "NotTerminal",
            TreeError::Malformed(_) => "MalformedTree",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeQuestion {
    pub id: String,
    pub text: String,
    /// (answer id, answer text)
    pub answers: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreePosition {
    Question(TreeQuestion),
    Terminal {
        metrics: Vec<Metric>,
        rationale: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeState {
    /// (question id, answer id) pairs from the root.
    pub answered: Vec<(String, String)>,
    pub current: TreePosition,
}

impl TreeState {
    pub fn is_terminal(&self) -> bool {
        matches!(self.current, TreePosition::Terminal { .. })
    }

    pub fn answer_ids(&self) -> Vec<&str> {
        self.answered.iter().map(|(_, a)| a.as_str()).collect()
    }
}

/// A tree definition with its node index, checked for structural soundness.
#[derive(Debug, Clone)]
pub struct FairnessTree {
    definition: TreeDefinition,
    index: BTreeMap<String, usize>,
}

impl FairnessTree {
    pub fn from_json(json: &str) -> Result<Self, TreeError> {
        let definition: TreeDefinition =
            serde_json::from_str(json).map_err(|e| TreeError::Malformed(e.to_string()))?;
        Self::new(definition)
    }

    /// Rejects duplicate ids, dangling edges, cycles, unreachable nodes and
    /// empty terminals.
    pub fn new(definition: TreeDefinition) -> Result<Self, TreeError> {
        let mut index = BTreeMap::new();
        for (i, node) in definition.nodes.iter().enumerate() {
            if index.insert(node.id().to_string(), i).is_some() {
                return Err(TreeError::Malformed(format!("duplicate node id {:?}", node.id())));
            }
        }
        let tree = FairnessTree { definition, index };
        if !tree.index.contains_key(&tree.definition.root) {
            return Err(TreeError::Malformed("root node missing".into()));
        }
        for node in &tree.definition.nodes {
            match node {
                TreeNode::Question { id, answers, .. } => {
                    if answers.is_empty() {
                        return Err(TreeError::Malformed(format!("question {id:?} has no answers")));
                    }
                    let mut seen = HashSet::new();
                    for a in answers {
                        if !seen.insert(&a.id) {
                            return Err(TreeError::Malformed(format!(
                                "answer {:?} repeated in {id:?}",
                                a.id
                            )));
                        }
                        if !tree.index.contains_key(&a.next) {
                            return Err(TreeError::Malformed(format!(
                                "answer {:?} of {id:?} points at unknown node {:?}",
                                a.id, a.next
                            )));
                        }
                    }
                }
                TreeNode::Terminal { id, metrics, .. } => {
                    if metrics.is_empty() {
                        return Err(TreeError::Malformed(format!("terminal {id:?} has no metrics")));
                    }
                }
            }
        }
        // Every node must be reached exactly once from the root: a tree, not a DAG.
        let mut visited = HashSet::new();
        let mut stack = vec![tree.definition.root.as_str()];
        while let Some(id) = stack.pop() {
            if !visited.insert(id) {
                return Err(TreeError::Malformed(format!("node {id:?} reached twice")));
            }
            if let TreeNode::Question { answers, .. } = tree.node(id) {
                stack.extend(answers.iter().map(|a| a.next.as_str()));
            }
        }
        if visited.len() != tree.definition.nodes.len() {
            return Err(TreeError::Malformed("unreachable nodes present".into()));
        }
        Ok(tree)
    }

    pub fn definition(&self) -> &TreeDefinition {
        &self.definition
    }

    pub fn version(&self) -> &str {
        &self.definition.version
    }

    fn node(&self, id: &str) -> &TreeNode {
        &self.definition.nodes[self.index[id]]
    }

    fn position(&self, id: &str) -> TreePosition {
        match self.node(id) {
            TreeNode::Question { id, text, answers } => TreePosition::Question(TreeQuestion {
                id: id.clone(),
                text: text.clone(),
                answers: answers.iter().map(|a| (a.id.clone(), a.text.clone())).collect(),
            }),
            TreeNode::Terminal {
                metrics, rationale, ..
            } => {
                let mut metrics = metrics.clone();
                metrics.sort();
                TreePosition::Terminal {
                    metrics,
                    rationale: rationale.clone(),
                }
            }
        }
    }

    pub fn start(&self) -> TreeState {
        TreeState {
            answered: Vec::new(),
            current: self.position(&self.definition.root),
        }
    }

    pub fn answer(&self, state: &TreeState, answer_id: &str) -> Result<TreeState, TreeError> {
        let TreePosition::Question(question) = &state.current else {
            return Err(TreeError::AlreadyTerminal);
        };
        let TreeNode::Question { answers, .. } = self.node(&question.id) else {
            return Err(TreeError::Malformed(format!("{:?} is not a question", question.id)));
        };
        let chosen = answers
            .iter()
            .find(|a| a.id == answer_id)
            .ok_or_else(|| TreeError::InvalidAnswer {
                question: question.id.clone(),
                answer: answer_id.to_string(),
            })?;
        let mut answered = state.answered.clone();
        answered.push((question.id.clone(), chosen.id.clone()));
        Ok(TreeState {
            answered,
            current: self.position(&chosen.next),
        })
    }

    /// Replays a sequence of answer ids from the root.
    pub fn replay<S: AsRef<str>>(&self, answers: &[S]) -> Result<TreeState, TreeError> {
        answers
            .iter()
            .try_fold(self.start(), |state, a| self.answer(&state, a.as_ref()))
    }

    /// Every root-to-leaf answer path with its terminal state, depth first.
    pub fn enumerate_paths(&self) -> Vec<(Vec<String>, TreeState)> {
        let mut out = Vec::new();
        let mut stack = vec![self.start()];
        while let Some(state) = stack.pop() {
            match &state.current {
                TreePosition::Terminal { .. } => {
                    let ids = state.answered.iter().map(|(_, a)| a.clone()).collect();
                    out.push((ids, state));
                }
                TreePosition::Question(q) => {
                    for (answer, _) in q.answers.iter().rev() {
                        stack.push(self.answer(&state, answer).expect("answer from question"));
                    }
                }
            }
        }
        out
    }
}

/// The tree shipped with the engine.
pub fn builtin() -> &'static FairnessTree {
    static TREE: OnceLock<FairnessTree> = OnceLock::new();
    TREE.get_or_init(|| FairnessTree::from_json(BUILTIN_TREE).expect("bundled tree is valid"))
}

/// The bundled tree definition exactly as shipped.
pub fn builtin_json() -> &'static str {
    BUILTIN_TREE
}

pub fn start() -> TreeState {
    builtin().start()
}

pub fn answer(state: &TreeState, answer_id: &str) -> Result<TreeState, TreeError> {
    builtin().answer(state, answer_id)
}

pub fn recommended_metrics(state: &TreeState) -> Result<Vec<Metric>, TreeError> {
    match &state.current {
        TreePosition::Terminal { metrics, .. } => Ok(metrics.clone()),
        TreePosition::Question(_) => Err(TreeError::NotTerminal),
    }
}

pub fn rationale(state: &TreeState) -> Option<&str> {
    match &state.current {
        TreePosition::Terminal { rationale, .. } => Some(rationale),
        TreePosition::Question(_) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metrics_for(path: &[&str]) -> Vec<Metric> {
        recommended_metrics(&builtin().replay(path).unwrap()).unwrap()
    }

    #[test]
    fn starts_at_root_question() {
        let s = start();
        assert!(s.answered.is_empty());
        assert_eq!(s, start());
        let TreePosition::Question(q) = &s.current else {
            panic!("root must be a question")
        };
        assert_eq!(q.id, "labels");
        assert!(q.answers.iter().any(|(id, _)| id == "uses-labels"));
    }

    #[test]
    fn documented_leaves() {
        assert_eq!(metrics_for(&["no-labels-used"]), vec![Metric::Pprev, Metric::Ppr]);
        assert_eq!(metrics_for(&["uses-labels", "punitive", "small-fraction"]), vec![Metric::Fdr]);
        assert_eq!(metrics_for(&["uses-labels", "punitive", "full-population"]), vec![Metric::Fpr]);
        assert_eq!(metrics_for(&["uses-labels", "assistive", "small-fraction"]), vec![Metric::For]);
        assert_eq!(
            metrics_for(&["uses-labels", "assistive", "full-population"]),
            vec![Metric::For, Metric::Fnr]
        );
        assert_eq!(
            metrics_for(&["uses-labels", "mixed", "small-fraction"]),
            vec![Metric::Fdr, Metric::For]
        );
    }

    #[test]
    fn error_paths() {
        let s = start();
        assert_eq!(
            answer(&s, "maybe").unwrap_err(),
            TreeError::InvalidAnswer {
                question: "labels".into(),
                answer: "maybe".into()
            }
        );
        let done = answer(&s, "no-labels-used").unwrap();
        assert_eq!(answer(&done, "uses-labels").unwrap_err(), TreeError::AlreadyTerminal);
        assert_eq!(recommended_metrics(&s).unwrap_err(), TreeError::NotTerminal);
        assert!(rationale(&done).is_some_and(|r| !r.is_empty()));
    }

    #[test]
    fn full_enumeration_terminates_with_nonempty_leaves() {
        let paths = builtin().enumerate_paths();
        assert_eq!(paths.len(), 7);
        let mut reached = HashSet::new();
        for (ids, state) in &paths {
            let metrics = recommended_metrics(state).unwrap();
            assert!(!metrics.is_empty());
            reached.extend(metrics.iter().copied());
            assert_eq!(&builtin().replay(ids).unwrap(), state);
        }
        for m in [Metric::Fdr, Metric::Fpr, Metric::For, Metric::Fnr] {
            assert!(reached.contains(&m));
        }
    }

    #[test]
    fn rejects_malformed_definitions() {
        let cyclic = r#"{"version":"x","root":"a","nodes":[
            {"id":"a","kind":"question","text":"?","answers":[{"id":"y","text":"","next":"a"}]}]}"#;
        assert!(matches!(FairnessTree::from_json(cyclic), Err(TreeError::Malformed(_))));

        let empty_leaf = r#"{"version":"x","root":"a","nodes":[
            {"id":"a","kind":"terminal","metrics":[],"rationale":""}]}"#;
        assert!(FairnessTree::from_json(empty_leaf).is_err());

        let dangling = r#"{"version":"x","root":"a","nodes":[
            {"id":"a","kind":"question","text":"?","answers":[{"id":"y","text":"","next":"b"}]}]}"#;
        assert!(FairnessTree::from_json(dangling).is_err());
    }
}
