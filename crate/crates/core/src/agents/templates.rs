//! Prompt templates for the three chat roles.
//!
//! Placeholders are `{anchor_caption}`, `{aggregated_answer}`, `{question}`
//! and `{vqa_answers}`. The defaults must stay byte-identical to the golden
//! files under `tests/golden/`.

use serde::{Deserialize, Serialize};

pub const QUESTIONER_SYSTEM: &str = "\
You are given caption about certain video(anchor video) and query used to retrieve the anchor video. However this video may not be the exact video the I am looking for.

Your role is to ask question about the video I have in mind to get more information about video. You have 5 rounds and you can only ask one question at a time.

Focus on attributes like number of people, color, shape and etc.";

pub const QUESTIONER_INITIAL: &str = "\
This is caption of retrieved video. Read the video captions and ask some question to gain more information to help find out exact video.
Some video may not have caption due to API error saying sorry I can't provide blah blah.
Captions for video: {anchor_caption}

Question:";

pub const QUESTIONER_ROUND: &str = "\
answer: {aggregated_answer}
Based on answer, here's caption of reranked video.
caption: {anchor_caption}
Keep asking.

Question:";

pub const ANSWERER_SYSTEM: &str = "\
You are a helpful assistant that answer the question with details. Don't jsut answer in yes or no. Provide more details(about facts) about the image that might help the questioner.";

pub const AGGREGATOR_SYSTEM: &str = "\
The VQA model is designed to answer questions based on images.
To apply it to videos, frames are uniformly extracted from the video over time, and the model provides an answer for each frame to a given question.
This means that for a single question, there will be multiple answers - one for each extracted frame.
Your role is to review all of the individual answers and summarize them to provide a final answer to the original question.
When making final answer, don't user unnecessary words like 'Based on the individual answers provided by the VQA model,'. Just answer to the question.

For example, if the question is \"Did a cookie appear in the video?\" and the individual answers from the frames are [\"No\", \"No\", \"Yes\", \"No\"],
then since a cookie appeared in the 3rd frame, you should summarize and answer the question as \"Yes\".
Length of aggregated answer should be around 30~35 words.";

pub const AGGREGATOR_INPUT: &str = "\
Question: {question}
VQA Answer: {vqa_answers}
Aggregated Answer:";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTemplates {
    pub questioner_system: String,
    pub questioner_initial: String,
    pub questioner_round: String,
    pub answerer_system: String,
    pub aggregator_system: String,
    pub aggregator_input: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            questioner_system: QUESTIONER_SYSTEM.to_string(),
            questioner_initial: QUESTIONER_INITIAL.to_string(),
            questioner_round: QUESTIONER_ROUND.to_string(),
            answerer_system: ANSWERER_SYSTEM.to_string(),
            aggregator_system: AGGREGATOR_SYSTEM.to_string(),
            aggregator_input: AGGREGATOR_INPUT.to_string(),
        }
    }
}

impl PromptTemplates {
    pub fn render_questioner_initial(&self, anchor_caption: &str) -> String {
        fill(&self.questioner_initial, &[("anchor_caption", anchor_caption)])
    }

    pub fn render_questioner_round(&self, aggregated_answer: &str, anchor_caption: &str) -> String {
        fill(
            &self.questioner_round,
            &[
                ("aggregated_answer", aggregated_answer),
                ("anchor_caption", anchor_caption),
            ],
        )
    }

    pub fn render_aggregator_input(&self, question: &str, answers: &[String]) -> String {
        let listed = format_answer_list(answers);
        fill(
            &self.aggregator_input,
            &[("question", question), ("vqa_answers", &listed)],
        )
    }
}

/// Renders answers the way the aggregator instruction's example lists them:
/// `["No", "No", "Yes", "No"]`.
pub fn format_answer_list(answers: &[String]) -> String {
    let quoted: Vec<String> = answers
        .iter()
        .map(|a| serde_json::to_string(a).expect("string serializes"))
        .collect();
    format!("[{}]", quoted.join(", "))
}

/// Single-pass placeholder substitution; substituted values are never
/// re-scanned, so captions containing `{...}` pass through untouched.
fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let replaced = after.find('}').and_then(|close| {
            let name = &after[..close];
            values
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| (*v, close))
        });
        match replaced {
            Some((value, close)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}
