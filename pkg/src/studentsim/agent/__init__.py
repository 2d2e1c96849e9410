from .engine import (
    AgentRun,
    AgentState,
    StepError,
    StepOutput,
    agent_seed,
    run_experiment1,
    run_experiment2,
    run_slide_step,
    simulate_agent,
)
from .prompts import MemoryStore, SimulationConfig, build_prompt, prior_statements, template_hash
