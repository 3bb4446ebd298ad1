use std::pin::Pin;
use std::task::{Context, Poll};

use futures::stream::BoxStream;
use futures::Stream;

use super::StreamEvent;
use crate::error::ProviderError;

/// One per-agent event source. An `Err` item ends the source and is turned
/// into an error event attributed to `agent_id`.
pub struct EventSource {
    pub agent_id: Option<u8>,
    pub round: u8,
    pub stream: BoxStream<'static, Result<StreamEvent, ProviderError>>,
}

impl EventSource {
    pub fn new(
        agent_id: Option<u8>,
        round: u8,
        stream: impl Stream<Item = Result<StreamEvent, ProviderError>> + Send + 'static,
    ) -> Self {
        Self { agent_id, round, stream: Box::pin(stream) }
    }
}

/// Round-robin fan-in of several event sources.
///
/// Each poll starts at the source after the one that last yielded, so a busy
/// source cannot starve the others. Items from one source keep their order.
pub struct Multiplex {
    sources: Vec<Option<EventSource>>,
    cursor: usize,
}

pub fn multiplex(sources: Vec<EventSource>) -> Multiplex {
    Multiplex { sources: sources.into_iter().map(Some).collect(), cursor: 0 }
}

impl Stream for Multiplex {
    type Item = StreamEvent;

    fn poll_next(mut self: Pin<&mut Self>, cx: &mut Context<'_>) -> Poll<Option<StreamEvent>> {
        let n = self.sources.len();
        for i in 0..n {
            let idx = (self.cursor + i) % n;
            let Some(source) = self.sources[idx].as_mut() else { continue };
            match source.stream.as_mut().poll_next(cx) {
                Poll::Ready(Some(Ok(event))) => {
                    self.cursor = (idx + 1) % n;
                    return Poll::Ready(Some(event));
                }
                Poll::Ready(Some(Err(e))) => {
                    let event = StreamEvent::error(source.agent_id, source.round, e.to_string());
                    self.sources[idx] = None;
                    self.cursor = (idx + 1) % n;
                    return Poll::Ready(Some(event));
                }
                Poll::Ready(None) => self.sources[idx] = None,
                Poll::Pending => {}
            }
        }
        if self.sources.iter().all(Option::is_none) {
            Poll::Ready(None)
        } else {
            Poll::Pending
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::StreamEventKind;
    use futures::StreamExt;

    fn source(agent: u8, payloads: &[&str]) -> EventSource {
        let items: Vec<_> = payloads.iter().map(|p| Ok(StreamEvent::token(agent, 1, *p))).collect();
        EventSource::new(Some(agent), 1, futures::stream::iter(items))
    }

    #[tokio::test]
    async fn single_source_is_identity() {
        let out: Vec<_> = multiplex(vec![source(0, &["a", "b", "c"])]).collect().await;
        let payloads: Vec<_> = out.iter().map(|e| e.payload.as_str()).collect();
        assert_eq!(payloads, ["a", "b", "c"]);
    }

    #[tokio::test]
    async fn ready_sources_alternate() {
        let out: Vec<_> = multiplex(vec![source(0, &["a1", "a2"]), source(1, &["b1", "b2"])]).collect().await;
        let payloads: Vec<_> = out.iter().map(|e| e.payload.as_str()).collect();
        assert_eq!(payloads, ["a1", "b1", "a2", "b2"]);
    }

    #[tokio::test]
    async fn error_does_not_halt_others() {
        let failing = EventSource::new(
            Some(0),
            1,
            futures::stream::iter(vec![
                Ok(StreamEvent::token(0, 1, "x")),
                Err(ProviderError::failed("p", "boom")),
                Ok(StreamEvent::token(0, 1, "never")),
            ]),
        );
        let out: Vec<_> = multiplex(vec![failing, source(1, &["b1", "b2", "b3"])]).collect().await;
        assert_eq!(out.len(), 5);
        let err = out.iter().find(|e| e.kind == StreamEventKind::Error).unwrap();
        assert_eq!(err.agent_id, Some(0));
        assert!(err.payload.contains("boom"));
        assert!(out.iter().all(|e| e.payload != "never"));
    }

    #[tokio::test]
    async fn empty_input_terminates() {
        assert!(multiplex(vec![]).collect::<Vec<_>>().await.is_empty());
    }
}
