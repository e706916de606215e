mod isa {
    use speed_sim::isa::*;

    #[test]
    fn precision_table() {
        assert_eq!(
            Precision::ALL.map(|p| (p.ic_par(), p.element_bits())),
            [(16, 64), (4, 32), (1, 16)]
        );
        assert_eq!((Precision::P4.min_value(), Precision::P4.max_value()), (-8, 7));
    }

    #[test]
    fn vsacfg_p16_ff_fields() {
        let w = encode(&Instruction::VsaCfg {
            precision: Precision::P16,
            dataflow: DataflowMode::FF,
        })
        .unwrap();
        assert_eq!((w >> 20) & 0b11, 0b10);
        assert_eq!((w >> 22) & 1, 0);
        assert_eq!(w, 0x0020_000B);
    }

    #[test]
    fn zero_word_is_illegal() {
        assert_eq!(decode(0), Err(IsaError::IllegalInstruction(0)));
    }

    #[test]
    fn vsam_round_trip() {
        let i = Instruction::VsaM {
            vs1: 1,
            vs2: 2,
            acc: 3,
            steps: 9,
        };
        assert_eq!(decode(encode(&i).unwrap()).unwrap(), i);
    }

    #[test]
    fn vsald_round_trip() {
        let i = Instruction::VsaLd {
            vd: 4,
            base: 10,
            count: 64,
        };
        assert_eq!(decode(encode(&i).unwrap()).unwrap(), i);
    }

    #[test]
    fn vsacfg_reserved_bits_rejected() {
        let w = encode(&Instruction::VsaCfg {
            precision: Precision::P8,
            dataflow: DataflowMode::CF,
        })
        .unwrap();
        for bit in (7..12).chain(15..20).chain(23..32) {
            assert!(matches!(decode(w | 1 << bit), Err(IsaError::ReservedField { .. })));
        }
        assert!(matches!(decode(w | 0b11 << 20), Err(IsaError::ReservedField { .. })));
    }

    #[test]
    fn unknown_funct3_and_selector_are_illegal() {
        for f3 in [0b110, 0b111] {
            let w = OPCODE_CUSTOM0 | f3 << 12;
            assert_eq!(decode(w), Err(IsaError::IllegalInstruction(w)));
        }
        let w = OPCODE_CUSTOM0 | FUNCT3_VSETCFG << 12 | 10 << 7;
        assert_eq!(decode(w), Err(IsaError::IllegalInstruction(w)));
    }

    #[test]
    fn field_overflow() {
        assert!(matches!(
            encode(&Instruction::VsaM {
                vs1: 32,
                vs2: 0,
                acc: 0,
                steps: 1
            }),
            Err(IsaError::FieldOverflow { field: "vs1", .. })
        ));
        for steps in [0, 129] {
            assert!(encode(&Instruction::VsaM {
                vs1: 0,
                vs2: 0,
                acc: 0,
                steps
            })
            .is_err());
        }
        assert!(encode(&Instruction::Vle {
            vd: 0,
            base: 0,
            count: 4096
        })
        .is_err());
    }
}

mod asm {
    use speed_sim::asm::*;
    use speed_sim::isa::*;

    #[test]
    fn vsacfg_line() {
        let w = assemble("vsacfg e8, cf").unwrap();
        let expect = encode(&Instruction::VsaCfg {
            precision: Precision::P8,
            dataflow: DataflowMode::CF,
        })
        .unwrap();
        assert_eq!(w, vec![expect]);
    }

    #[test]
    fn empty_input() {
        assert!(assemble("").unwrap().is_empty());
        assert!(assemble("# only a comment\n\n   \n").unwrap().is_empty());
    }

    #[test]
    fn vsam_line() {
        let w = assemble("vsam v1, v2, v3, 16").unwrap();
        let expect = encode(&Instruction::VsaM {
            vs1: 1,
            vs2: 2,
            acc: 3,
            steps: 16,
        })
        .unwrap();
        assert_eq!(w, vec![expect]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = assemble("vsacfg e8, ff\nvsam v1, v2\n").unwrap_err();
        assert!(matches!(e, AsmError::Parse { line: 2, .. }));
        let e = assemble("\n\nvfoo v1").unwrap_err();
        assert!(matches!(e, AsmError::Parse { line: 3, .. }));
        let e = assemble("vsam v1, v2, v3, 0").unwrap_err();
        assert!(matches!(e, AsmError::Encode { line: 1, .. }));
        assert!(assemble("vsald v32, x1, 3").is_err());
        assert!(assemble("vsald v1, v1, 3").is_err());
    }

    #[test]
    fn disassemble_round_trip() {
        let src = "vsacfg e16, ff\nvsetcfg ksize, 3\nvsald v4, x10, 64\nvle v0, x10, 256\nvsam v4, v0, v8, 9\nvse v8, x11, 128\n";
        let words = assemble(src).unwrap();
        assert_eq!(disassemble(&words).unwrap(), src);
    }
}

mod props {
    use proptest::prelude::*;
    use speed_sim::asm::{assemble, disassemble};
    use speed_sim::isa::*;

    fn instr() -> impl Strategy<Value = Instruction> {
        let r = || 0u8..32;
        let count = || 0u16..=MAX_COUNT;
        prop_oneof![
            (0usize..3, any::<bool>()).prop_map(|(p, cf)| Instruction::VsaCfg {
                precision: Precision::ALL[p],
                dataflow: if cf { DataflowMode::CF } else { DataflowMode::FF },
            }),
            (r(), r(), count()).prop_map(|(vd, base, count)| Instruction::VsaLd { vd, base, count }),
            (r(), r(), r(), 1u16..=MAX_STEPS).prop_map(|(vs1, vs2, acc, steps)| Instruction::VsaM {
                vs1,
                vs2,
                acc,
                steps
            }),
            (0usize..CfgReg::ALL.len(), 0u16..=MAX_CFG_VALUE).prop_map(|(i, value)| Instruction::VSetCfg {
                reg: CfgReg::ALL[i],
                value
            }),
            (r(), r(), count()).prop_map(|(vd, base, count)| Instruction::Vle { vd, base, count }),
            (r(), r(), count()).prop_map(|(vs, base, count)| Instruction::Vse { vs, base, count }),
        ]
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(i in instr()) {
            let w = encode(&i).unwrap();
            prop_assert_eq!(w & 0x7F, OPCODE_CUSTOM0);
            prop_assert_eq!(decode(w).unwrap(), i);
        }

        #[test]
        fn decode_is_canonical(w: u32) {
            if let Ok(i) = decode(w) {
                prop_assert_eq!(encode(&i).unwrap(), w);
            }
        }

        #[test]
        fn text_round_trip(prog in prop::collection::vec(instr(), 0..20)) {
            let words: Vec<u32> = prog.iter().map(|i| encode(i).unwrap()).collect();
            let text = disassemble(&words).unwrap();
            prop_assert_eq!(assemble(&text).unwrap(), words);
        }

        #[test]
        fn assembler_never_panics(s in "\\PC{0,60}") {
            let _ = assemble(&s);
        }
    }
}
