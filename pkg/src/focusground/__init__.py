"""Active-perception GUI grounding: tools, rewards, rollouts, GRPO and evaluation."""
