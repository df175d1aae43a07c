//! Audit of an exported session: every embedding and ranking is recomputed
//! from the stored texts and compared exactly with the stored values.

use super::{NavError, Session};
use crate::agents::AgentBackend;
use crate::embedding::slerp;
use crate::index::{RankedList, VideoIndex};

fn diverged(round: usize, reason: impl Into<String>) -> NavError {
    NavError::ReplayDivergence {
        round,
        reason: reason.into(),
    }
}

fn check_ids(export: &Session, index: &VideoIndex) -> Result<(), NavError> {
    let mut ids = export.round0.ids().collect::<Vec<_>>();
    for round in &export.rounds {
        ids.push(&round.anchor_id);
        ids.extend(round.ranking.ids());
    }
    ids.extend(export.target_id.as_deref());
    match ids.into_iter().find(|id| index.get(id).is_none()) {
        Some(missing) => Err(NavError::UnknownVideo(missing.to_string())),
        None => Ok(()),
    }
}

fn same_ranking(a: &RankedList, b: &RankedList) -> bool {
    a.entries.len() == b.entries.len()
        && a
            .entries
            .iter()
            .zip(&b.entries)
            .all(|(x, y)| x.id == y.id && x.score.to_bits() == y.score.to_bits())
}

/// Recomputes `export` against `index` with `backend`'s encoder and returns
/// the rebuilt session, or the first round whose stored state differs.
pub fn replay(
    export: &Session,
    backend: &AgentBackend,
    index: &VideoIndex,
) -> Result<Session, NavError> {
    check_ids(export, index)?;
    export.params.validate()?;

    let query_embedding = backend.encode(&export.query_text)?;
    if query_embedding != export.query_embedding {
        return Err(diverged(0, "query embedding differs"));
    }
    let round0 = index.top_k(&query_embedding, export.k)?;
    if !same_ranking(&round0, &export.round0) {
        return Err(diverged(0, "round-0 ranking differs"));
    }
    let round0_target_rank = export
        .target_id
        .as_deref()
        .map(|id| index.rank_of(&query_embedding, id))
        .transpose()?;
    if round0_target_rank != export.round0_target_rank {
        return Err(diverged(0, "round-0 target rank differs"));
    }

    let mut current = query_embedding.clone();
    let mut previous_top = round0.top().map(|e| e.id.clone());
    for (i, stored) in export.rounds.iter().enumerate() {
        let round = i + 1;
        if stored.round_index != round {
            return Err(diverged(round, "round index out of sequence"));
        }
        if previous_top.as_deref() != Some(stored.anchor_id.as_str()) {
            return Err(diverged(round, "anchor is not the previous top-1"));
        }
        let answer_embedding = backend.encode(&stored.aggregated_answer)?;
        if answer_embedding != stored.answer_embedding {
            return Err(diverged(round, "answer embedding differs from aggregated answer"));
        }
        current = slerp(&current, &answer_embedding, &export.params)?;
        let ranking = index.top_k(&current, export.k)?;
        if !same_ranking(&ranking, &stored.ranking) {
            return Err(diverged(round, "ranking differs"));
        }
        let target_rank = export
            .target_id
            .as_deref()
            .map(|id| index.rank_of(&current, id))
            .transpose()?;
        if target_rank != stored.target_rank {
            return Err(diverged(round, "target rank differs"));
        }
        previous_top = ranking.top().map(|e| e.id.clone());
    }
    if current != export.current_embedding {
        return Err(diverged(
            export.rounds.len(),
            "current embedding differs from the refinement chain",
        ));
    }

    Ok(Session {
        query_embedding,
        current_embedding: current,
        round0,
        round0_target_rank,
        ..export.clone()
    })
}
