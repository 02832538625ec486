/** Wire and state types shared across the app. */

export type PointPx = [number, number];

export interface PairPx {
  source: PointPx;
  target: PointPx;
}

/** The drag-spec document the service accepts (mask inlined as a data URL). */
export interface DragSpecDoc {
  image: { width_px: number; height_px: number };
  downscale_factor: number;
  pairs: PairPx[];
  mask: string;
}

export interface MaskRle {
  width: number;
  height: number;
  runs: [number, number][];
}

/** Response body of POST /sessions/{id}/edit. */
export interface EditSummary {
  session: string;
  grid: { width: number; height: number };
  downscale_factor: number;
  mask_src_rle: MaskRle;
  mask_dst_rle: MaskRle;
  reachability: boolean[];
  artifacts: Record<string, string>;
  wall_time_ms: number;
}

export interface OverlayToggles {
  srcMask: boolean;
  dstMask: boolean;
  field: boolean;
  preview: boolean;
}
