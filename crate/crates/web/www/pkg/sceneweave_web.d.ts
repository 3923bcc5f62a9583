/* tslint:disable */
/* eslint-disable */

/**
 * A small room with a table, a solar system and a history of requests.
 */
export class Playground {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Schedules an animation command, e.g. `{"animations": [...]}`.
     */
    animate(command: string): string;
    /**
     * Context for one category (and optionally one property) next to the
     * size of the full dump.
     */
    context(category: string, property: string): string;
    /**
     * Drops a physics cube of edge `size` at (x, y, z) and reports how the
     * support rule moved it.
     */
    drop_cube(x: number, y: number, z: number, size: number): string;
    constructor();
    /**
     * Current visible objects plus the room proxies, for drawing.
     */
    scene(): string;
    /**
     * Advances `ticks` fixed steps and returns the visible objects.
     */
    step(ticks: number): string;
    /**
     * Stops an animation by id.
     */
    stop(id: string): string;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_playground_free: (a: number, b: number) => void;
    readonly playground_animate: (a: number, b: number, c: number) => [number, number];
    readonly playground_context: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly playground_drop_cube: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly playground_new: () => number;
    readonly playground_scene: (a: number) => [number, number];
    readonly playground_step: (a: number, b: number) => [number, number];
    readonly playground_stop: (a: number, b: number, c: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
