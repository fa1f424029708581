"""
Entry point for the ion-autocorr command line.

支持通过 python -m ion_autocorr 或 ion-autocorr 运行各条流水线，serve 子命令启动 MCP 服务器。
"""

import argparse
import asyncio
import sys
from pathlib import Path
from typing import Optional, Sequence

from .cli import COMMANDS, RunConfig, parse_overrides, run
from .config import Config
from .errors import ConfigError

# 显式标志与参数表键名的对应
FLAG_KEYS = {
    "sigma_ps": float,
    "gdd_ps2": float,
    "intensity": float,
    "nu_khz": float,
    "mass_amu": float,
    "wavelength_nm": float,
    "nbar": float,
    "c0": float,
    "n_phase": int,
    "rel_tol": float,
    "noise_rms": float,
    "p_red": float,
    "p_blue": float,
    "fixed": str,
}


def _add_common(parser: argparse.ArgumentParser) -> None:
    for key, kind in FLAG_KEYS.items():
        parser.add_argument(
            '--' + key.replace('_', '-'),
            dest=key,
            type=kind,
            default=None,
            help=f'覆盖参数 {key}（默认: {Config.DEFAULTS[key]!r}）'
        )
    parser.add_argument('--seed', type=int, default=None, help='随机种子（synth 使用）')
    parser.add_argument('--out', type=str, default=None,
                        help=f'输出目录（默认: {Config.get_output_dir()}）')
    parser.add_argument('--config', type=str, default=None,
                        help='JSON 参数文件，也可以是之前运行的 run_manifest.json')
    parser.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                        help='覆盖参数表中的任意键，可重复')
    parser.add_argument('--input', type=str, default=None, help='输入数据集 CSV（fit、fit-revival）')
    parser.add_argument('--revival', action='store_true',
                        help='contrast/synth 使用 CPP 间隔扫描模型（延迟单位 µs）')
    parser.add_argument('--verbose', action='store_true', help='输出 DEBUG 级别日志')


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """解析命令行参数"""
    parser = argparse.ArgumentParser(
        prog='ion-autocorr',
        description='Ion Autocorrelator - 啁啾脉冲 RAP 动力学、自旋回波对比度与脉冲参数反演'
    )
    subparsers = parser.add_subparsers(dest='command', required=True)
    for command in COMMANDS:
        _add_common(subparsers.add_parser(command))
    subparsers.add_parser('serve', help='以 stdio 方式启动 MCP 服务器')
    return parser.parse_args(argv)


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """由命令行参数构造 RunConfig"""
    return RunConfig(
        command=args.command,
        output_dir=Path(args.out) if args.out else Config.get_output_dir(),
        input_path=Path(args.input) if args.input else None,
        config_path=Path(args.config) if args.config else None,
        overrides=parse_overrides(args.overrides),
        flags={key: getattr(args, key) for key in FLAG_KEYS},
        seed=args.seed,
        revival=args.revival,
        verbose=args.verbose,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    """主入口函数"""
    args = parse_args(argv)
    if args.command == 'serve':
        from .server import main as server_main
        asyncio.run(server_main())
        return 0
    try:
        config = build_run_config(args)
    except ConfigError as e:
        print(f"错误: {e}", file=sys.stderr)
        return e.exit_code
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
