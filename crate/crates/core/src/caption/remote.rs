//! Captioning through a remote multimodal chat endpoint. Each request embeds
//! the track's motion summary in a prompt template, optionally attaches a
//! frame crop as an inline image, and is answered by the model. Responses are
//! cached on disk keyed by a hash of everything that shaped the request, so
//! reruns are free and deterministic.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use base64::Engine;
use sha2::{Digest, Sha256};

use crate::caption::cache::TextCache;
use crate::caption::PromptTemplate;
use crate::error::{Error, Result};
use crate::remote::RemoteEndpoint;

/// One caption request, self-contained so batches can run on worker threads.
#[derive(Debug, Clone)]
pub struct CaptionRequest {
    pub class: String,
    pub descriptor_text: String,
    pub window: u64,
    /// PNG bytes of a crop around the object, when frames are available.
    pub image_png: Option<Vec<u8>>,
}

pub struct RemoteCaptioner {
    pub endpoint: RemoteEndpoint,
    pub template: PromptTemplate,
    /// Worker threads used by `caption_all`.
    pub concurrency: usize,
    cache: TextCache,
}

/// Hash of every input that could change the response: model, both prompt
/// halves, and the image bytes. Doubles as the cache key and is recorded next
/// to each caption for auditability.
pub fn prompt_hash(model: &str, system: &str, user: &str, image: Option<&[u8]>) -> String {
    let mut h = Sha256::new();
    h.update(model.as_bytes());
    h.update([0]);
    h.update(system.as_bytes());
    h.update([0]);
    h.update(user.as_bytes());
    h.update([0]);
    if let Some(bytes) = image {
        h.update(bytes);
    }
    format!("{:x}", h.finalize())
}

impl RemoteCaptioner {
    pub fn new(
        endpoint: RemoteEndpoint,
        template: PromptTemplate,
        cache_path: Option<PathBuf>,
        concurrency: usize,
    ) -> Result<RemoteCaptioner> {
        Ok(RemoteCaptioner {
            endpoint,
            template,
            concurrency: concurrency.max(1),
            cache: TextCache::open(cache_path)?,
        })
    }

    /// Caption one request, consulting the cache first. Returns the caption
    /// text and the prompt hash that keyed it.
    pub fn caption(&self, req: &CaptionRequest) -> Result<(String, String)> {
        let (system, user) =
            self.template
                .build_prompt(&req.descriptor_text, &req.class, req.window)?;
        let key = prompt_hash(
            &self.endpoint.model,
            &system,
            &user,
            req.image_png.as_deref(),
        );
        if let Some(hit) = self.cache.get(&key) {
            return Ok((hit, key));
        }

        let user_content = match &req.image_png {
            Some(bytes) => {
                let encoded = base64::engine::general_purpose::STANDARD.encode(bytes);
                serde_json::json!([
                    {"type": "text", "text": user},
                    {"type": "image_url", "image_url": {
                        "url": format!("data:image/png;base64,{encoded}")
                    }},
                ])
            }
            None => serde_json::json!(user),
        };
        let body = serde_json::json!({
            "model": self.endpoint.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user_content},
            ],
        });
        let resp = self.endpoint.post_json("chat/completions", &body)?;
        let text = resp
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .ok_or_else(|| {
                Error::Invalid("chat response missing choices[0].message.content".into())
            })?
            .trim()
            .to_string();
        if text.is_empty() {
            return Err(Error::Invalid("chat response was empty".into()));
        }
        self.cache.put(key.clone(), text.clone());
        Ok((text, key))
    }

    /// Caption a batch on up to `concurrency` worker threads, preserving
    /// input order. The first error aborts remaining work.
    pub fn caption_all(&self, requests: &[CaptionRequest]) -> Result<Vec<(String, String)>> {
        if requests.is_empty() {
            return Ok(Vec::new());
        }
        let workers = self.concurrency.min(requests.len());
        if workers <= 1 {
            return requests.iter().map(|r| self.caption(r)).collect();
        }
        type Slot = Option<Result<(String, String)>>;
        let next = AtomicUsize::new(0);
        let out: Mutex<Vec<Slot>> = Mutex::new((0..requests.len()).map(|_| None).collect());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= requests.len() {
                        break;
                    }
                    let r = self.caption(&requests[i]);
                    let failed = r.is_err();
                    out.lock().expect("result lock")[i] = Some(r);
                    if failed {
                        // Starve remaining work; in-flight requests finish.
                        next.fetch_add(requests.len(), Ordering::SeqCst);
                        break;
                    }
                });
            }
        });
        let slots = out.into_inner().expect("result lock");
        let mut results = Vec::with_capacity(requests.len());
        for slot in slots {
            match slot {
                Some(Ok(v)) => results.push(v),
                Some(Err(e)) => return Err(e),
                None => {
                    return Err(Error::stage(
                        "caption",
                        "batch aborted after an earlier request failed",
                    ))
                }
            }
        }
        Ok(results)
    }

    pub fn flush_cache(&self) -> Result<()> {
        self.cache.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_hash_is_sensitive_to_every_input() {
        let base = prompt_hash("m", "s", "u", None);
        assert_ne!(base, prompt_hash("m2", "s", "u", None));
        assert_ne!(base, prompt_hash("m", "s2", "u", None));
        assert_ne!(base, prompt_hash("m", "s", "u2", None));
        assert_ne!(base, prompt_hash("m", "s", "u", Some(b"png")));
        assert_eq!(base, prompt_hash("m", "s", "u", None));
        assert_eq!(base.len(), 64);
    }
}
