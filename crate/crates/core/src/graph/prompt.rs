use std::path::Path;

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{GraphError, Result};

pub const PROMPT_VERSION: &str = "graph_v1";

const SYSTEM: &str = include_str!("../../assets/prompts/graph_v1/system.txt");
const SCHEMA: &str = include_str!("../../assets/prompts/graph_v1/schema.txt");

const EXAMPLES: [(&str, &str, &str); 3] = [
    (
        "01_two_door_cabinet",
        include_str!("../../assets/prompts/graph_v1/examples/01_two_door_cabinet.txt"),
        include_str!("../../assets/prompts/graph_v1/examples/01_two_door_cabinet.response.txt"),
    ),
    (
        "02_dresser",
        include_str!("../../assets/prompts/graph_v1/examples/02_dresser.txt"),
        include_str!("../../assets/prompts/graph_v1/examples/02_dresser.response.txt"),
    ),
    (
        "03_oven",
        include_str!("../../assets/prompts/graph_v1/examples/03_oven.txt"),
        include_str!("../../assets/prompts/graph_v1/examples/03_oven.response.txt"),
    ),
];

/// One in-context example: a textual scene description and the expected
/// answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptExample {
    pub name: String,
    pub description: String,
    pub response: String,
}

/// The bundled example set for `set_id` (currently only `graph_v1`).
pub fn example_set(set_id: &str) -> Result<Vec<PromptExample>> {
    if set_id != PROMPT_VERSION {
        return Err(GraphError::UnknownExampleSet(set_id.to_string()));
    }
    Ok(EXAMPLES
        .iter()
        .map(|(n, d, r)| PromptExample {
            name: n.to_string(),
            description: d.trim().to_string(),
            response: r.trim().to_string(),
        })
        .collect())
}

pub fn response_schema() -> &'static str {
    SCHEMA.trim_end()
}

pub fn system_instruction(schema: &str) -> String {
    SYSTEM.trim_end().replace("{schema}", schema)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    ImageUrl { image_url: ImageUrl },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageUrl {
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MessageContent {
    Text(String),
    Parts(Vec<ContentPart>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: MessageContent,
}

impl ChatMessage {
    pub fn text(role: &str, text: impl Into<String>) -> Self {
        ChatMessage {
            role: role.to_string(),
            content: MessageContent::Text(text.into()),
        }
    }

    pub fn text_content(&self) -> String {
        match &self.content {
            MessageContent::Text(t) => t.clone(),
            MessageContent::Parts(parts) => parts
                .iter()
                .filter_map(|p| match p {
                    ContentPart::Text { text } => Some(text.as_str()),
                    ContentPart::ImageUrl { .. } => None,
                })
                .collect::<Vec<_>>()
                .join("\n"),
        }
    }
}

/// The query image: a URL passed through as-is, or a local file inlined as
/// a data URL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageRef {
    Url(String),
    Path(std::path::PathBuf),
}

impl ImageRef {
    pub fn to_url(&self) -> Result<String> {
        match self {
            ImageRef::Url(u) => Ok(u.clone()),
            ImageRef::Path(p) => {
                let bytes = std::fs::read(p).map_err(|e| GraphError::Image(format!("{}: {e}", p.display())))?;
                Ok(format!(
                    "data:{};base64,{}",
                    mime_for(p),
                    base64::engine::general_purpose::STANDARD.encode(bytes)
                ))
            }
        }
    }
}

fn mime_for(p: &Path) -> &'static str {
    match p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("webp") => "image/webp",
        _ => "image/png",
    }
}

const QUERY_TEXT: &str = "Here is the object image. Describe its part connectivity.";

/// System instruction, then one user/assistant pair per example, then the
/// query image.
pub fn build_prompt(image: &ImageRef, examples: &[PromptExample], schema: &str) -> Result<Vec<ChatMessage>> {
    if examples.is_empty() {
        return Err(GraphError::NoExamples);
    }
    let mut msgs = vec![ChatMessage::text("system", system_instruction(schema))];
    for ex in examples {
        msgs.push(ChatMessage::text("user", ex.description.clone()));
        msgs.push(ChatMessage::text("assistant", ex.response.clone()));
    }
    msgs.push(ChatMessage {
        role: "user".into(),
        content: MessageContent::Parts(vec![
            ContentPart::Text {
                text: QUERY_TEXT.into(),
            },
            ContentPart::ImageUrl {
                image_url: ImageUrl { url: image.to_url()? },
            },
        ]),
    });
    Ok(msgs)
}
