/* tslint:disable */
/* eslint-disable */

/**
 * Modularity, global efficiency and their ratio for an edge list of
 * "u v" pairs, one per line.
 */
export function edge_metrics(text: string, seed: bigint): string;

/**
 * One episode played by an untrained random initial genome. Returns an
 * array of frames, the first being the start state.
 */
export function episode(seed: bigint, n_seasons: number, energy_cost: boolean): string;

/**
 * Size and segregation/integration ratio along a chain of mutations from
 * a fresh genome, with no selection at all.
 */
export function mutation_walk(seed: bigint, steps: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly edge_metrics: (a: number, b: number, c: bigint) => [number, number, number, number];
    readonly episode: (a: bigint, b: number, c: number) => [number, number, number, number];
    readonly mutation_walk: (a: bigint, b: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
