//! Token-bounded FIFO conversation history.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

/// Token budget of the conversation history handed to the affect provider.
pub const WINDOW_CAPACITY_TOKENS: usize = 8192;
/// Word count the token budget corresponds to.
pub const WINDOW_CAPACITY_WORDS: usize = 6000;

/// Estimates tokens as `ceil(words * 8192 / 6000)`, at least 1 for non-empty text.
pub fn estimate_tokens(text: &str) -> usize {
    if text.is_empty() {
        return 0;
    }
    let words = text.split_whitespace().count();
    let tokens = (words * WINDOW_CAPACITY_TOKENS).div_ceil(WINDOW_CAPACITY_WORDS);
    tokens.max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Student,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowEntry {
    pub role: Role,
    pub token_count: usize,
    pub text: String,
}

/// Conversation history for one live session.
///
/// The token sum never exceeds the capacity, except when the newest entry alone is larger
/// than the capacity; it is then kept whole as the sole entry.
#[derive(Debug, Clone)]
pub struct ConversationWindow {
    entries: VecDeque<WindowEntry>,
    capacity_tokens: usize,
    total_tokens: usize,
}

impl Default for ConversationWindow {
    fn default() -> Self {
        Self::new()
    }
}

impl ConversationWindow {
    pub fn new() -> Self {
        Self::with_capacity(WINDOW_CAPACITY_TOKENS)
    }

    pub fn with_capacity(capacity_tokens: usize) -> Self {
        Self {
            entries: VecDeque::new(),
            capacity_tokens,
            total_tokens: 0,
        }
    }

    pub fn push(&mut self, role: Role, text: impl Into<String>) {
        let text = text.into();
        let token_count = estimate_tokens(&text);
        self.push_entry(WindowEntry {
            role,
            token_count,
            text,
        });
    }

    /// Appends an entry with a precomputed token count and evicts oldest-first.
    pub fn push_entry(&mut self, entry: WindowEntry) {
        self.total_tokens += entry.token_count;
        self.entries.push_back(entry);
        while self.total_tokens > self.capacity_tokens && self.entries.len() > 1 {
            if let Some(evicted) = self.entries.pop_front() {
                self.total_tokens -= evicted.token_count;
            }
        }
    }

    pub fn entries(&self) -> impl ExactSizeIterator<Item = &WindowEntry> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_tokens(&self) -> usize {
        self.total_tokens
    }

    pub fn capacity_tokens(&self) -> usize {
        self.capacity_tokens
    }

    /// Drops all retained text.
    pub fn clear(&mut self) {
        self.entries.clear();
        self.total_tokens = 0;
    }
}
