from .parsing import STEP_SCHEMA, TRANSCRIPT_SCHEMA, ParseFailure, extract_json_object, parse_structured
from .provider import (
    AuthenticationError,
    ChatProvider,
    ChatRequest,
    Completion,
    ConfigError,
    Coupling,
    MalformedResponseError,
    MockPolicy,
    MockProvider,
    NetworkDisabledError,
    ProviderConfig,
    ProviderError,
    RateLimiter,
    RemoteProvider,
    RetriesExhaustedError,
    TransientProviderError,
    make_provider,
)
