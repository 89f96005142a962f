use std::collections::BTreeMap;

use super::ProtocolError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub id: String,
    pub from: String,
    pub to: String,
    pub body: String,
}

/// Append-only message list shared by the branches of a channel exchange.
///
/// Ids are `m1, m2, …` in posting order. Each branch has a cursor into the
/// list; consuming moves it to the end and returns the messages addressed
/// to that branch which it passed over.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelBus {
    pub name: String,
    branches: Vec<String>,
    messages: Vec<Message>,
    cursors: BTreeMap<String, usize>,
    consumed: Vec<String>,
}

impl ChannelBus {
    pub fn new(name: impl Into<String>, branches: &[String]) -> Self {
        ChannelBus {
            name: name.into(),
            branches: branches.to_vec(),
            messages: Vec::new(),
            cursors: branches.iter().map(|b| (b.clone(), 0)).collect(),
            consumed: Vec::new(),
        }
    }

    /// Appends a message. A recipient that is not a declared branch is
    /// rejected after the id is assigned, so the error names it.
    pub fn post(&mut self, from: &str, to: &str, body: &str) -> Result<&Message, ProtocolError> {
        let id = format!("m{}", self.messages.len() + 1);
        if !self.branches.iter().any(|b| b == to) || !self.branches.iter().any(|b| b == from) {
            return Err(ProtocolError::UnknownAddressee(id));
        }
        self.messages.push(Message {
            id,
            from: from.to_string(),
            to: to.to_string(),
            body: body.to_string(),
        });
        Ok(self.messages.last().expect("just pushed"))
    }

    pub fn consume(&mut self, branch: &str) -> Vec<Message> {
        let Some(cursor) = self.cursors.get_mut(branch) else {
            return Vec::new();
        };
        let fresh: Vec<Message> = self.messages[*cursor..]
            .iter()
            .filter(|m| m.to == branch)
            .cloned()
            .collect();
        *cursor = self.messages.len();
        self.consumed.extend(fresh.iter().map(|m| m.id.clone()));
        fresh
    }

    pub fn pending(&self, branch: &str) -> Vec<&Message> {
        let cursor = self.cursors.get(branch).copied().unwrap_or(0);
        self.messages[cursor..]
            .iter()
            .filter(|m| m.to == branch)
            .collect()
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    /// Ids in the order they were consumed.
    pub fn consumed(&self) -> &[String] {
        &self.consumed
    }

    pub fn cursor(&self, branch: &str) -> Option<usize> {
        self.cursors.get(branch).copied()
    }
}
