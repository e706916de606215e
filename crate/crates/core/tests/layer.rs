mod layer {
    use speed_sim::dataflow::*;
    use speed_sim::isa::Precision;

    #[test]
    fn requantize_examples() {
        assert_eq!(requantize(0, Precision::P8, 7), 0);
        assert_eq!(requantize(300, Precision::P8, 0), 127);
        assert_eq!(requantize(-4096, Precision::P8, 4), -128);
        assert_eq!(requantize(-17, Precision::P4, 1), -8);
        assert_eq!(requantize(-3, Precision::P16, 1), -2);
    }

    #[test]
    fn output_dims() {
        let l = LayerSpec::new("c", 3, 64, 224, 224, 7, 2, 3, Precision::P8);
        assert_eq!((l.out_h(), l.out_w()), (112, 112));
        let l = LayerSpec::new("c", 3, 96, 224, 224, 7, 2, 0, Precision::P8);
        assert_eq!(l.out_h(), 109);
    }

    #[test]
    fn parse_table() {
        let text = "# comment\nname,cin,cout,h,w,k,stride,pad,precision\na,6,8,5,5,3,1,1,4\nb, 8, 8, 5, 5, 1, 1, 0,\n";
        let ls = parse_layers(text, Precision::P16).unwrap();
        assert_eq!(ls.len(), 2);
        assert_eq!(ls[0].precision, Precision::P4);
        assert_eq!(ls[1].precision, Precision::P16);
        assert_eq!(ls[0].groups(), 1);
        assert!(parse_layers("name,cin,cout,h,w,k,stride,pad\nx,1,1,2,2,3,1,0\n", Precision::P8).is_err());
        assert!(parse_layers("name,cin\nx,1\n", Precision::P8).is_err());
    }

    #[test]
    fn shift_is_bounded() {
        let l = LayerSpec::new("c", 512, 512, 7, 7, 3, 1, 1, Precision::P16);
        assert_eq!(default_shift(&l), 15 + 7);
        let l = LayerSpec::new("c", 1, 1, 1, 1, 1, 1, 0, Precision::P4);
        assert_eq!(default_shift(&l), 4);
    }
}
