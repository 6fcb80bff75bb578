//! HTTP client for an external distiller. The request body is the core
//! `LlmRequest`; the response body is the model's JSON reply.

use std::time::Duration;

use csi_core::relay::{distill_from_reply, llm_request, DistillerBinding, DistillerKind, RelayJob};
use csi_core::{AnswerOption, Distillation};

#[derive(Clone)]
pub struct ExternalDistiller {
    http: reqwest::Client,
    endpoint: String,
    model: Option<String>,
    api_key: Option<String>,
    timeout: Duration,
}

impl ExternalDistiller {
    /// `None` for the mock binding.
    pub fn from_binding(binding: &DistillerBinding) -> csi_core::Result<Option<Self>> {
        if binding.kind != DistillerKind::ExternalLlm {
            return Ok(None);
        }
        binding.validate()?;
        let p = &binding.parameters;
        Ok(Some(Self {
            http: reqwest::Client::new(),
            endpoint: p["endpoint"].clone(),
            model: p.get("model").cloned(),
            api_key: p.get("api_key").cloned(),
            timeout: binding.timeout()?,
        }))
    }

    /// Distills one relay window. Transport failures and timeouts give
    /// `None` so the relay is skipped; unparseable replies fall back to the
    /// counting rules.
    pub async fn distill(&self, job: &RelayJob, options: &[AnswerOption]) -> Option<Distillation> {
        let body = llm_request(&job.window, options, self.model.as_deref());
        let mut req = self
            .http
            .post(&self.endpoint)
            .timeout(self.timeout)
            .json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let reply = async { req.send().await?.error_for_status()?.text().await };
        match reply.await {
            Ok(text) => Some(distill_from_reply(&text, &job.window, options)),
            Err(e) => {
                tracing::warn!(source = %job.source, "distiller unavailable, relay skipped: {e}");
                None
            }
        }
    }
}
