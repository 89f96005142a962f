use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

/// A parsed `<toolcall>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolInvocation {
    pub function: String,
    pub args: Vec<(String, String)>,
}

type ToolFn = dyn Fn(&ToolInvocation) -> Result<String, String> + Send + Sync;

/// Function name to stub. A stub returns the markup to place inside
/// `<agent_output>` or a failure message.
#[derive(Clone, Default)]
pub struct ToolRegistry {
    tools: BTreeMap<String, Arc<ToolFn>>,
}

impl fmt::Debug for ToolRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.tools.keys()).finish()
    }
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        name: impl Into<String>,
        f: impl Fn(&ToolInvocation) -> Result<String, String> + Send + Sync + 'static,
    ) -> &mut Self {
        self.tools.insert(name.into(), Arc::new(f));
        self
    }

    /// A stub that always returns `output`.
    pub fn fixed(&mut self, name: impl Into<String>, output: impl Into<String>) -> &mut Self {
        let output = output.into();
        self.register(name, move |_| Ok(output.clone()))
    }

    pub fn failing(&mut self, name: impl Into<String>, message: impl Into<String>) -> &mut Self {
        let message = message.into();
        self.register(name, move |_| Err(message.clone()))
    }

    pub fn invoke(&self, call: &ToolInvocation) -> Result<String, String> {
        match self.tools.get(&call.function) {
            Some(f) => f(call),
            None => Err(format!("no tool named {}", call.function)),
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tools.keys().map(String::as_str)
    }
}
