export * from './formats.js';
export * from './primary.js';
export * from './gtcLoss.js';
export * from './model.js';
export * from './data.js';
export * from './metrics.js';
export * from './demo.js';
export { Rng } from './prng.js';
