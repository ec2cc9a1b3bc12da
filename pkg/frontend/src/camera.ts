/**
 * Orbit camera over the hair box. Orbiting maps to the service view pose:
 * yaw about world Y and pitch about world X (both in degrees), matching the
 * server's strand-space rotation.
 */

export interface ViewPoseDeg {
  y_deg: number;
  x_deg: number;
  z_deg: number;
}

export class OrbitCamera {
  yawRad = 0;
  pitchRad = 0;
  distance = 2.2;
  readonly target: [number, number, number];

  constructor(target: [number, number, number] = [0.5, 0.5, 0.375]) {
    this.target = target;
  }

  orbit(dxPx: number, dyPx: number, sensitivity = 0.008): void {
    this.yawRad += dxPx * sensitivity;
    this.pitchRad += dyPx * sensitivity;
    const cap = Math.PI / 2 - 0.01;
    this.pitchRad = Math.max(-cap, Math.min(cap, this.pitchRad));
  }

  pose(): ViewPoseDeg {
    return {
      y_deg: (this.yawRad * 180) / Math.PI,
      x_deg: (this.pitchRad * 180) / Math.PI,
      z_deg: 0,
    };
  }

  setPose(p: ViewPoseDeg): void {
    this.yawRad = (p.y_deg * Math.PI) / 180;
    this.pitchRad = (p.x_deg * Math.PI) / 180;
  }

  /** Row-major 3x3 rotation: Y first, then X (matches the server order). */
  matrix(): Float64Array {
    const cy = Math.cos(this.yawRad);
    const sy = Math.sin(this.yawRad);
    const cx = Math.cos(this.pitchRad);
    const sx = Math.sin(this.pitchRad);
    // Rx @ Ry
    return new Float64Array([
      cy, 0, sy,
      sx * sy, cx, -sx * cy,
      -cx * sy, sx, cx * cy,
    ]);
  }
}
