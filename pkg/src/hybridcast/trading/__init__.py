"""Day-ahead bidding: settlement, stochastic bids, error shaping and backtests."""

from hybridcast.trading.backtest import STRATEGIES, BacktestReport, backtest
from hybridcast.trading.error_shaping import (
    ErrorShapingModel,
    TrainingDiverged,
    evaluate_spread_model,
    train_error_shaping,
    train_spread_model,
)
from hybridcast.trading.strategy import (
    BID_MAX,
    BID_MIN,
    BID_SLOPE,
    IMBALANCE_PENALTY,
    SPREAD_WEIGHT,
    MarketSeries,
    SpreadEstimator,
    ar_spread_forecast,
    baseline_bid,
    decision_revenue,
    estimate_spread,
    loss_decomposition,
    optimal_bid,
    period_of_day,
    period_revenue,
    settle,
    trading_loss,
    trading_loss_direct,
)

__all__ = [
    "STRATEGIES", "BacktestReport", "backtest", "ErrorShapingModel", "TrainingDiverged", "evaluate_spread_model",
    "train_error_shaping", "train_spread_model", "BID_MAX", "BID_MIN", "BID_SLOPE", "IMBALANCE_PENALTY",
    "SPREAD_WEIGHT", "MarketSeries", "SpreadEstimator", "ar_spread_forecast", "baseline_bid", "decision_revenue",
    "estimate_spread", "loss_decomposition", "optimal_bid", "period_of_day", "period_revenue", "settle",
    "trading_loss", "trading_loss_direct",
]
