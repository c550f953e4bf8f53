//! Expansion prompt rendering.
//!
//! A full prompt is the node's path context (one sentence per edge from the
//! root), then the relation's list instruction followed by the fixed frame.

use sha2::{Digest, Sha256};

use super::{KbError, KnowledgeBase, NodeId, RelationKind};

/// Text appended after the list instruction.
pub const PROMPT_FRAME_SUFFIX: &str =
    " Pay attention to the context above. Summarize in a JSON list.\n\n'''json\n";

/// Context sentences along the root-to-node path, joined by single spaces.
/// Empty for the root.
pub fn build_context(kb: &KnowledgeBase, node: NodeId) -> Result<String, KbError> {
    let path = kb.path(node)?;
    let mut sentences = Vec::with_capacity(path.len().saturating_sub(1));
    for pair in path.windows(2) {
        let parent = kb.node(pair[0])?;
        let child = kb.node(pair[1])?;
        let relation = child.relation.as_ref().expect("non-root node has a relation");
        let template = kb.catalog().get(relation)?;
        sentences.push(template.render_context(child.label(), parent.label()));
    }
    Ok(sentences.join(" "))
}

/// Wraps an instruction line in the context block and frame.
pub fn render_prompt_frame(context: &str, instruction: &str) -> String {
    let mut prompt = String::with_capacity(context.len() + instruction.len() + 80);
    if !context.is_empty() {
        prompt.push_str(context);
        prompt.push('\n');
    }
    prompt.push_str(instruction);
    prompt.push_str(PROMPT_FRAME_SUFFIX);
    prompt
}

/// Full expansion prompt asking for `n` concepts related to `node` by `kind`.
/// With `n = None` the count is rendered as "some".
pub fn render_list_prompt(
    kb: &KnowledgeBase,
    node: NodeId,
    kind: &RelationKind,
    n: Option<usize>,
) -> Result<String, KbError> {
    let template = kb.catalog().get(kind)?;
    let label = kb.node(node)?.label();
    let instruction = match n {
        Some(n) => template.render_list(n, label),
        None => template.render_list_unsized(label),
    };
    Ok(render_prompt_frame(&build_context(kb, node)?, &instruction))
}

/// Short content hash identifying the prompt a concept was generated from.
pub fn prompt_hash(prompt: &str) -> String {
    let digest = Sha256::digest(prompt.as_bytes());
    hex::encode(&digest[..8])
}
