class BudgetExceededError(RuntimeError):
    """An enumeration would exceed its configured budget."""


DEFAULT_BUDGET = 10**8


def check_budget(size: int, budget: int | None, what: str) -> None:
    limit = DEFAULT_BUDGET if budget is None else budget
    if size > limit:
        raise BudgetExceededError(f"{what}: {size} items exceeds budget {limit}")
