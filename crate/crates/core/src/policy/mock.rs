//! Scripted provider for tests: replays a fixed queue of completions.

use std::collections::VecDeque;
use std::sync::Mutex;

use super::{Completion, Provider, ProviderError, SampleRequest};

pub struct MockProvider {
    queue: Mutex<VecDeque<String>>,
    require_tags: bool,
}

impl MockProvider {
    pub fn new<I, S>(scripted: I) -> MockProvider
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        MockProvider {
            queue: Mutex::new(scripted.into_iter().map(Into::into).collect()),
            require_tags: false,
        }
    }

    pub fn with_require_tags(mut self, require: bool) -> MockProvider {
        self.require_tags = require;
        self
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().unwrap().len()
    }
}

impl Provider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn sample(&self, req: &SampleRequest) -> Result<Vec<Completion>, ProviderError> {
        let mut queue = self.queue.lock().unwrap();
        if queue.len() < req.n {
            return Err(ProviderError::Exhausted);
        }
        Ok((0..req.n).map(|_| Completion::plain(queue.pop_front().unwrap())).collect())
    }

    fn require_think_tags(&self) -> bool {
        self.require_tags
    }
}
